#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fuzzkit {

struct Arch {
  enum class Kind { X86_64, ARM_32, UNKNOWN };
  Kind kind = Kind::UNKNOWN;
  std::uint16_t machine_code = 0;  // raw ELF e_machine, kept for UNKNOWN

  static Arch from_machine(std::uint16_t code);
  std::string name() const;
  friend bool operator==(const Arch&, const Arch&) = default;
};

struct VersionInfo {
  int major = 0;
  int minor = 0;
  std::optional<int> patch;
  std::string raw;  // as matched in the binary, e.g. "1.36.1"

  static std::optional<VersionInfo> parse(const std::string& text);
  std::string str() const { return raw; }

  // Lexicographic on (major, minor, patch with absent = -1).
  friend std::strong_ordering operator<=>(const VersionInfo& a,
                                          const VersionInfo& b) {
    if (auto c = a.major <=> b.major; c != 0) return c;
    if (auto c = a.minor <=> b.minor; c != 0) return c;
    return a.patch.value_or(-1) <=> b.patch.value_or(-1);
  }
  friend bool operator==(const VersionInfo& a, const VersionInfo& b) {
    return (a <=> b) == 0;
  }
};

struct TargetBinary {
  std::filesystem::path path;
  std::string content_hash;  // 32-byte digest, lowercase hex
  Arch arch;
  std::optional<std::string> component;
  std::optional<VersionInfo> version;
  std::uint64_t size_bytes = 0;
};

struct ScanResult {
  std::vector<TargetBinary> targets;  // sorted by path
  std::vector<std::string> diagnostics;  // unreadable files, never fatal
};

ScanResult scan_filesystem(const std::filesystem::path& root, int max_depth);

// "BusyBox v<maj>.<min>[.<patch>]" inside a printable run of length >= 4.
std::optional<std::pair<std::string, VersionInfo>> extract_version(
    std::span<const std::uint8_t> file_bytes);

std::string fingerprint(std::span<const std::uint8_t> file_bytes);

struct VersionTable {
  struct Row {
    std::string component;  // "unknown" for version-less targets
    std::string version;
    std::size_t file_count = 0;
    std::size_t unique_hash_count = 0;
  };
  std::vector<Row> rows;

  std::string to_csv() const;  // columns: component,version,count
  std::string to_json() const;
};

VersionTable inventory_report(const std::vector<TargetBinary>& targets);

}  // namespace fuzzkit
