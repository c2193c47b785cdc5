#include "fuzzkit/inventory.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace fuzzkit {

namespace {

constexpr std::uint16_t kMachineArm = 40;
constexpr std::uint16_t kMachineX86_64 = 62;
constexpr std::size_t kMinPrintableRun = 4;  // strings(1) default

bool is_printable(std::uint8_t c) { return c >= 0x20 && c <= 0x7e; }

std::vector<std::uint8_t> read_file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot read file: " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

Arch Arch::from_machine(std::uint16_t code) {
  Arch a;
  a.machine_code = code;
  switch (code) {
    case kMachineArm:
      a.kind = Kind::ARM_32;
      break;
    case kMachineX86_64:
      a.kind = Kind::X86_64;
      break;
    default:
      a.kind = Kind::UNKNOWN;
      break;
  }
  return a;
}

std::string Arch::name() const {
  switch (kind) {
    case Kind::X86_64:
      return "x86_64";
    case Kind::ARM_32:
      return "arm_32";
    case Kind::UNKNOWN:
      return "unknown(" + std::to_string(machine_code) + ")";
  }
  return "unknown";
}

std::optional<VersionInfo> VersionInfo::parse(const std::string& text) {
  static const std::regex re(R"((\d+)\.(\d+)(?:\.(\d+))?)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) return std::nullopt;
  VersionInfo v;
  v.major = std::stoi(m[1].str());
  v.minor = std::stoi(m[2].str());
  if (m[3].matched) v.patch = std::stoi(m[3].str());
  v.raw = text;
  return v;
}

std::string fingerprint(std::span<const std::uint8_t> file_bytes) {
  return sha256_hex(file_bytes);
}

std::optional<std::pair<std::string, VersionInfo>> extract_version(
    std::span<const std::uint8_t> file_bytes) {
  static const std::regex re(R"(BusyBox v(\d+\.\d+(?:\.\d+)?))");
  std::size_t i = 0;
  const std::size_t n = file_bytes.size();
  while (i < n) {
    if (!is_printable(file_bytes[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_printable(file_bytes[j])) ++j;
    if (j - i >= kMinPrintableRun) {
      std::string run(reinterpret_cast<const char*>(file_bytes.data() + i),
                      j - i);
      std::smatch m;
      if (std::regex_search(run, m, re)) {
        auto v = VersionInfo::parse(m[1].str());
        if (v) return std::make_pair(std::string("busybox"), *v);
      }
    }
    i = j;
  }
  return std::nullopt;
}

ScanResult scan_filesystem(const fs::path& root, int max_depth) {
  std::error_code ec;
  if (!fs::exists(root, ec) || !fs::is_directory(root, ec))
    throw InputError("scan root missing or not a directory: " + root.string());

  ScanResult result;
  fs::recursive_directory_iterator it(
      root, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw InputError("scan root unreadable: " + root.string());

  for (auto end = fs::recursive_directory_iterator(); it != end;
       it.increment(ec)) {
    if (ec) {
      result.diagnostics.push_back("walk error: " + ec.message());
      ec.clear();
      continue;
    }
    if (it.depth() >= max_depth) it.disable_recursion_pending();
    const auto& entry = *it;
    if (entry.is_symlink(ec)) continue;  // symlinks not followed
    if (!entry.is_regular_file(ec)) continue;

    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file_bytes(entry.path());
    } catch (const InputError& e) {
      result.diagnostics.push_back(e.what());
      continue;
    }
    if (bytes.size() < 20 || bytes[0] != 0x7f || bytes[1] != 'E' ||
        bytes[2] != 'L' || bytes[3] != 'F')
      continue;

    TargetBinary t;
    t.path = entry.path();
    t.size_bytes = bytes.size();
    t.content_hash = fingerprint(bytes);
    // e_machine at offset 18, byte order per EI_DATA (offset 5).
    bool big_endian = bytes[5] == 2;
    std::uint16_t machine = big_endian
                                ? static_cast<std::uint16_t>(bytes[18] << 8 |
                                                             bytes[19])
                                : static_cast<std::uint16_t>(bytes[19] << 8 |
                                                             bytes[18]);
    t.arch = Arch::from_machine(machine);
    if (auto cv = extract_version(bytes)) {
      t.component = cv->first;
      t.version = cv->second;
    }
    result.targets.push_back(std::move(t));
  }

  std::sort(result.targets.begin(), result.targets.end(),
            [](const TargetBinary& a, const TargetBinary& b) {
              return a.path < b.path;
            });
  return result;
}

VersionTable inventory_report(const std::vector<TargetBinary>& targets) {
  struct Key {
    std::string component;
    std::optional<VersionInfo> version;
    bool operator<(const Key& o) const {
      if (component != o.component) return component < o.component;
      bool a = version.has_value(), b = o.version.has_value();
      if (a != b) return a > b;  // versioned rows before "unknown"
      if (!a) return false;
      return *version < *o.version;
    }
  };
  std::map<Key, std::pair<std::size_t, std::set<std::string>>> groups;
  for (const auto& t : targets) {
    Key k{t.component.value_or("unknown"), t.version};
    auto& [count, hashes] = groups[k];
    ++count;
    hashes.insert(t.content_hash);
  }
  VersionTable table;
  for (const auto& [k, v] : groups) {
    VersionTable::Row row;
    row.component = k.component;
    row.version = k.version ? "v" + k.version->str() : "unknown";
    row.file_count = v.first;
    row.unique_hash_count = v.second.size();
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string VersionTable::to_csv() const {
  std::ostringstream out;
  out << "component,version,count\n";
  for (const auto& r : rows)
    out << r.component << ',' << r.version << ',' << r.file_count << '\n';
  return out.str();
}

std::string VersionTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"component", r.component},
                         {"version", r.version},
                         {"count", r.file_count},
                         {"unique_hash_count", r.unique_hash_count}});
  }
  return nlohmann::json{{"rows", rows_json}}.dump(2) + "\n";
}

}  // namespace fuzzkit
