#include "fuzzkit/crashdb.hpp"

#include <signal.h>

#include <algorithm>
#include <chrono>
#include <fstream>

#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fuzzkit {

Signal Signal::from_number(int signo) {
  Signal s;
  s.code = signo;
  switch (signo) {
    case SIGSEGV:
      s.kind = Kind::SEGV;
      break;
    case SIGABRT:
      s.kind = Kind::ABRT;
      break;
    case SIGBUS:
      s.kind = Kind::BUS;
      break;
    case SIGFPE:
      s.kind = Kind::FPE;
      break;
    case SIGILL:
      s.kind = Kind::ILL;
      break;
    default:
      s.kind = Kind::OTHER;
      break;
  }
  return s;
}

int Signal::number() const { return code; }

std::string Signal::name() const {
  switch (kind) {
    case Kind::SEGV:
      return "SIGSEGV";
    case Kind::ABRT:
      return "SIGABRT";
    case Kind::BUS:
      return "SIGBUS";
    case Kind::FPE:
      return "SIGFPE";
    case Kind::ILL:
      return "SIGILL";
    case Kind::OTHER:
      return "SIG" + std::to_string(code);
  }
  return "SIG?";
}

std::optional<Signal> Signal::from_name(const std::string& name) {
  if (name == "SIGSEGV") return Signal::from_number(SIGSEGV);
  if (name == "SIGABRT") return Signal::from_number(SIGABRT);
  if (name == "SIGBUS") return Signal::from_number(SIGBUS);
  if (name == "SIGFPE") return Signal::from_number(SIGFPE);
  if (name == "SIGILL") return Signal::from_number(SIGILL);
  if (name.rfind("SIG", 0) == 0) {
    try {
      return Signal::from_number(std::stoi(name.substr(3)));
    } catch (...) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {

json signature_to_json(const CrashSignature& s) {
  return {{"signal", s.signal.name()},
          {"frame_hash", s.frame_hash},
          {"top_frame", s.top_frame},
          {"low_confidence", s.low_confidence}};
}

CrashSignature signature_from_json(const json& j) {
  CrashSignature s;
  s.signal = Signal::from_name(j.at("signal").get<std::string>())
                 .value_or(Signal{});
  s.frame_hash = j.at("frame_hash").get<std::string>();
  s.top_frame = j.value("top_frame", "");
  s.low_confidence = j.value("low_confidence", false);
  return s;
}

json record_to_json(const CrashRecord& r) {
  json j = {{"id", r.id},
            {"input_hash", r.input_hash},
            {"input_len", r.input_len},
            {"component", r.component},
            {"applet", r.applet},
            {"source_target_hash", r.source_target_hash},
            {"source_arch", r.source_arch.name()},
            {"source_arch_code", r.source_arch.machine_code},
            {"discovery", r.discovery == Discovery::FUZZING ? "fuzzing"
                                                            : "reuse"},
            {"signal", r.signal.name()},
            {"recorded_at", r.recorded_at}};
  if (r.source_version) j["source_version"] = r.source_version->raw;
  if (r.signature) j["signature"] = signature_to_json(*r.signature);
  return j;
}

CrashRecord record_from_json(const json& j) {
  CrashRecord r;
  r.id = j.at("id").get<std::string>();
  r.input_hash = j.at("input_hash").get<std::string>();
  r.input_len = j.at("input_len").get<std::uint64_t>();
  r.component = j.at("component").get<std::string>();
  r.applet = j.at("applet").get<std::string>();
  r.source_target_hash = j.at("source_target_hash").get<std::string>();
  r.source_arch = Arch::from_machine(
      j.value("source_arch_code", std::uint16_t{0}));
  r.discovery = j.value("discovery", "fuzzing") == std::string("reuse")
                    ? Discovery::REUSE
                    : Discovery::FUZZING;
  r.signal = Signal::from_name(j.value("signal", "SIG0")).value_or(Signal{});
  r.recorded_at = j.value("recorded_at", std::int64_t{0});
  if (j.contains("source_version"))
    r.source_version = VersionInfo::parse(j["source_version"].get<std::string>());
  if (j.contains("signature")) r.signature = signature_from_json(j["signature"]);
  return r;
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

CrashStore CrashStore::open(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) throw StoreError("cannot create store at " + dir.string());

  CrashStore store(dir);
  std::ifstream index(dir / "index.jsonl");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(index, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      CrashRecord rec = record_from_json(json::parse(line));
      store.records_[rec.id] = std::move(rec);  // later lines supersede
    } catch (const std::exception& e) {
      throw StoreError("corrupt index line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return store;
}

void CrashStore::append_index_line(const CrashRecord& rec) {
  std::ofstream out(dir_ / "index.jsonl", std::ios::app);
  if (!out) throw StoreError("cannot append to index: " + dir_.string());
  out << record_to_json(rec).dump() << '\n';
  out.flush();
  if (!out) throw StoreError("index write failed: " + dir_.string());
}

std::string CrashStore::insert(std::span<const std::uint8_t> input_bytes,
                               const CrashMeta& meta) {
  if (input_bytes.empty()) throw InputError("crash input must be non-empty");
  if (meta.component.empty() || meta.applet.empty())
    throw InputError("crash metadata requires component and applet");

  std::lock_guard lock(write_mutex_);
  std::string input_hash = sha256_hex(input_bytes);
  std::string id = input_hash + ":" + meta.source_target_hash;
  if (auto it = records_.find(id); it != records_.end()) return id;

  fs::path blob = dir_ / "blobs" / input_hash;
  if (!fs::exists(blob)) {
    fs::path tmp = blob;
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(input_bytes.data()),
              static_cast<std::streamsize>(input_bytes.size()));
    out.close();
    if (!out) throw StoreError("blob write failed: " + blob.string());
    fs::rename(tmp, blob);
  }

  CrashRecord rec;
  rec.id = id;
  rec.input_hash = input_hash;
  rec.input_len = input_bytes.size();
  rec.component = meta.component;
  rec.applet = meta.applet;
  rec.source_target_hash = meta.source_target_hash;
  rec.source_version = meta.source_version;
  rec.source_arch = meta.source_arch;
  rec.discovery = meta.discovery;
  rec.signal = meta.signal;
  rec.signature = meta.signature;
  rec.recorded_at = meta.recorded_at.value_or(now_seconds());
  append_index_line(rec);
  records_[id] = std::move(rec);
  return id;
}

void CrashStore::attach_signature(const std::string& id,
                                  const CrashSignature& sig) {
  std::lock_guard lock(write_mutex_);
  auto it = records_.find(id);
  if (it == records_.end()) throw StoreError("no such record: " + id);
  CrashRecord updated = it->second;
  updated.signature = sig;
  append_index_line(updated);
  it->second = std::move(updated);
}

std::vector<CrashRecord> CrashStore::query(const CrashFilter& f) const {
  std::vector<CrashRecord> out;
  for (const auto& [id, r] : records_) {
    if (f.component && r.component != *f.component) continue;
    if (f.applet && r.applet != *f.applet) continue;
    if (f.arch && r.source_arch.kind != *f.arch) continue;
    if (f.discovery && r.discovery != *f.discovery) continue;
    if (f.version_lo || f.version_hi) {
      if (!r.source_version) continue;  // absent versions excluded from ranges
      if (f.version_lo && *r.source_version < *f.version_lo) continue;
      if (f.version_hi && !(*r.source_version < *f.version_hi)) continue;
    }
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(),
            [](const CrashRecord& a, const CrashRecord& b) {
              if (a.recorded_at != b.recorded_at)
                return a.recorded_at < b.recorded_at;
              return a.input_hash < b.input_hash;
            });
  return out;
}

std::optional<CrashRecord> CrashStore::get(const std::string& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::uint8_t> CrashStore::load_blob(
    const std::string& input_hash) const {
  fs::path blob = dir_ / "blobs" / input_hash;
  std::ifstream in(blob, std::ios::binary);
  if (!in) throw StoreError("missing blob: " + blob.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

std::vector<std::string> CrashStore::import_directory(const fs::path& dir,
                                                      const CrashMeta& base) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw InputError("import source is not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    // AFL writes a README into crashes/; skip non-input bookkeeping files.
    if (entry.path().filename().string().rfind("README", 0) == 0) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> ids;
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>()};
    if (bytes.empty()) continue;
    CrashMeta meta = base;
    meta.discovery = Discovery::FUZZING;
    ids.push_back(insert(bytes, meta));
  }
  return ids;
}

UniqueGroups unique_groups(const std::vector<CrashRecord>& records) {
  UniqueGroups out;
  for (const auto& r : records) {
    if (r.signature)
      out.groups[*r.signature].push_back(r.id);
    else
      out.unsigned_ids.push_back(r.id);
  }
  return out;
}

}  // namespace fuzzkit
