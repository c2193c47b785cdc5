#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fuzzkit/inventory.hpp"

namespace fuzzkit {

struct Signal {
  enum class Kind { SEGV, ABRT, BUS, FPE, ILL, OTHER };
  Kind kind = Kind::OTHER;
  int code = 0;  // raw signal number, kept for OTHER

  static Signal from_number(int signo);
  int number() const;
  std::string name() const;
  static std::optional<Signal> from_name(const std::string& name);
  friend auto operator<=>(const Signal& a, const Signal& b) {
    return std::tie(a.kind, a.code) <=> std::tie(b.kind, b.code);
  }
  friend bool operator==(const Signal&, const Signal&) = default;
};

struct CrashSignature {
  Signal signal;
  std::string frame_hash;  // 16-byte digest over top-K normalized frames, hex
  std::string top_frame;
  bool low_confidence = false;  // frames unavailable, signal-only signature

  friend bool operator==(const CrashSignature& a, const CrashSignature& b) {
    return a.signal == b.signal && a.frame_hash == b.frame_hash;
  }
  friend auto operator<=>(const CrashSignature& a, const CrashSignature& b) {
    return std::tie(a.signal, a.frame_hash) <=> std::tie(b.signal, b.frame_hash);
  }
};

enum class Discovery { FUZZING, REUSE };

struct CrashRecord {
  std::string id;  // "<input_hash>:<source_target_hash>"
  std::string input_hash;
  std::uint64_t input_len = 0;
  std::string component;
  std::string applet;
  std::string source_target_hash;
  std::optional<VersionInfo> source_version;
  Arch source_arch;
  Discovery discovery = Discovery::FUZZING;
  Signal signal;
  std::optional<CrashSignature> signature;
  std::int64_t recorded_at = 0;  // unix seconds
};

struct CrashMeta {
  std::string component;
  std::string applet;
  std::string source_target_hash;
  std::optional<VersionInfo> source_version;
  Arch source_arch;
  Discovery discovery = Discovery::FUZZING;
  Signal signal;
  std::optional<CrashSignature> signature;
  std::optional<std::int64_t> recorded_at;  // defaults to now
};

struct CrashFilter {
  std::optional<std::string> component;
  std::optional<std::string> applet;
  // Half-open interval [lo, hi); either bound may be absent.
  std::optional<VersionInfo> version_lo;
  std::optional<VersionInfo> version_hi;
  std::optional<Arch::Kind> arch;
  std::optional<Discovery> discovery;
};

struct UniqueGroups {
  std::map<CrashSignature, std::vector<std::string>> groups;
  std::vector<std::string> unsigned_ids;
};

// Content-addressed crash store: <dir>/blobs/<input_hash> plus an append-only
// <dir>/index.jsonl where later lines for the same id supersede earlier ones.
class CrashStore {
 public:
  static CrashStore open(const std::filesystem::path& dir);
  CrashStore(CrashStore&& other) noexcept
      : dir_(std::move(other.dir_)), records_(std::move(other.records_)) {}
  CrashStore& operator=(CrashStore&&) = delete;

  std::string insert(std::span<const std::uint8_t> input_bytes,
                     const CrashMeta& meta);
  void attach_signature(const std::string& id, const CrashSignature& sig);

  std::vector<CrashRecord> query(const CrashFilter& filter = {}) const;
  std::optional<CrashRecord> get(const std::string& id) const;
  std::vector<std::uint8_t> load_blob(const std::string& input_hash) const;
  std::size_t size() const { return records_.size(); }
  const std::filesystem::path& dir() const { return dir_; }

  // Ingest an external fuzzer's crashes/ directory, discovery=FUZZING.
  std::vector<std::string> import_directory(const std::filesystem::path& dir,
                                            const CrashMeta& base_meta);

 private:
  explicit CrashStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void append_index_line(const CrashRecord& rec);

  std::filesystem::path dir_;
  std::map<std::string, CrashRecord> records_;
  mutable std::mutex write_mutex_;
};

UniqueGroups unique_groups(const std::vector<CrashRecord>& records);

}  // namespace fuzzkit
