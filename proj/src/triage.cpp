#include "fuzzkit/triage.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "fuzzkit/proc.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fuzzkit {

namespace {

constexpr std::uint64_t kPageSize = 4096;

struct MapEntry {
  std::uint64_t start = 0;
  std::uint64_t end = 0;
  std::string module;
};

std::vector<MapEntry> parse_mappings(const std::string& transcript) {
  static const std::regex map_re(
      R"(^\s+(0x[0-9a-fA-F]+)\s+(0x[0-9a-fA-F]+)\s+0x[0-9a-fA-F]+\s+0x[0-9a-fA-F]+\s+(?:[rwxps-]+\s+)?(\S+)\s*$)");
  std::vector<MapEntry> maps;
  std::istringstream in(transcript);
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, map_re)) continue;
    MapEntry e;
    e.start = std::stoull(m[1].str(), nullptr, 16);
    e.end = std::stoull(m[2].str(), nullptr, 16);
    std::string obj = m[3].str();
    auto slash = obj.find_last_of('/');
    e.module = slash == std::string::npos ? obj : obj.substr(slash + 1);
    maps.push_back(e);
  }
  return maps;
}

struct Cycle {
  std::size_t skip = 0;    // leading frames before the recursion (e.g. a leaf
                           // callee the fault landed in)
  std::size_t period = 0;  // 0 means no repeating cycle found
};

// Smallest repeating cycle near the top of the frame sequence. Periods up to
// 8 frames and up to 3 leading non-cycle frames are considered.
Cycle find_repeating_cycle(const std::vector<std::string>& names,
                           std::size_t min_repeats) {
  for (std::size_t skip = 0; skip <= 3; ++skip) {
    for (std::size_t p = 1; p <= 8; ++p) {
      if (skip + p * min_repeats > names.size()) break;
      bool ok = true;
      std::size_t span = skip + p * min_repeats;
      for (std::size_t i = skip; i + p < span; ++i) {
        if (names[i] != names[i + p]) {
          ok = false;
          break;
        }
      }
      if (ok) return {skip, p};
    }
  }
  return {};
}

}  // namespace

std::string StackFrame::normalized() const {
  if (symbol && !symbol->empty() && *symbol != "??") return *symbol;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "+0x%llx",
                static_cast<unsigned long long>(offset));
  return module + buf;
}

TriageResult parse_debug_transcript(const std::string& transcript,
                                    const std::string& target_module,
                                    const TriageOptions& options) {
  TriageResult result;
  result.raw_backtrace = transcript;

  static const std::regex signal_re(
      R"(Program received signal (SIG[A-Z0-9]+))");
  static const std::regex terminated_re(
      R"(Program terminated with signal (SIG[A-Z0-9]+))");
  static const std::regex frame_re(
      R"(^#(\d+)\s+(?:(0x[0-9a-fA-F]+)\s+in\s+)?([^\s(]+)\s*\()");
  static const std::regex siaddr_re(R"(si_addr\s*=\s*(0x[0-9a-fA-F]+|\d+))");
  static const std::regex from_re(R"( from (\S+))");

  std::smatch m;
  if (std::regex_search(transcript, m, signal_re) ||
      std::regex_search(transcript, m, terminated_re)) {
    if (auto sig = Signal::from_name(m[1].str())) result.signal = *sig;
  }
  if (std::regex_search(transcript, m, siaddr_re)) {
    const std::string& v = m[1].str();
    result.fault_address =
        v.rfind("0x", 0) == 0 ? std::stoull(v, nullptr, 16) : std::stoull(v);
  }

  auto maps = parse_mappings(transcript);
  auto resolve = [&](std::uint64_t addr) -> std::pair<std::string, std::uint64_t> {
    for (const auto& e : maps)
      if (addr >= e.start && addr < e.end) return {e.module, addr - e.start};
    return {target_module, addr & 0xffffff};
  };

  std::istringstream in(transcript);
  std::string line;
  int last_index = -1;
  while (std::getline(in, line)) {
    std::smatch fm;
    if (!std::regex_match(line, fm, frame_re)) {
      if (!std::regex_search(line, fm, frame_re)) continue;
    }
    int index = std::stoi(fm[1].str());
    // gdb restarts numbering if several backtraces appear; keep the first.
    if (index <= last_index) break;
    last_index = index;

    StackFrame frame;
    std::string symbol = fm[3].str();
    std::uint64_t addr = 0;
    if (fm[2].matched) addr = std::stoull(fm[2].str(), nullptr, 16);

    std::smatch fromm;
    if (std::regex_search(line, fromm, from_re)) {
      std::string obj = fromm[1].str();
      auto slash = obj.find_last_of('/');
      frame.module = slash == std::string::npos ? obj : obj.substr(slash + 1);
    }

    if (symbol == "??") {
      auto [mod, off] = resolve(addr);
      if (frame.module.empty()) frame.module = mod;
      frame.offset = off;
    } else {
      frame.symbol = symbol;
      if (frame.module.empty()) {
        if (fm[2].matched) {
          auto [mod, off] = resolve(addr);
          frame.module = mod;
          frame.offset = off;
        } else {
          frame.module = target_module;
        }
      }
    }
    result.frames.push_back(std::move(frame));
  }

  // Classification.
  std::vector<std::string> names;
  names.reserve(result.frames.size());
  for (const auto& f : result.frames) names.push_back(f.normalized());

  Cycle cycle = find_repeating_cycle(
      names, static_cast<std::size_t>(options.depth_threshold));
  if (cycle.period > 0 &&
      names.size() >= static_cast<std::size_t>(options.depth_threshold)) {
    result.classification = "stack-exhaustion";
  } else if (result.signal.kind == Signal::Kind::SEGV && result.fault_address &&
             *result.fault_address < kPageSize) {
    result.classification = "null-deref";
  } else if (result.signal.kind == Signal::Kind::ABRT) {
    result.classification = "abort";
  } else if (result.signal.kind == Signal::Kind::SEGV ||
             result.signal.kind == Signal::Kind::BUS) {
    result.classification = "invalid-deref";
  } else {
    result.classification = "other";
  }
  return result;
}

TriageResult classify_crash(const ExecutionPlan& plan,
                            const HarnessSpec& harness,
                            const fs::path& target_path,
                            std::span<const std::uint8_t> input_bytes,
                            DebuggerAdapter& debugger,
                            const TriageOptions& options) {
  ReplayOutcome replay = replay_one(plan, harness, target_path, input_bytes);
  if (replay.verdict != ReplayOutcome::Verdict::CRASH)
    throw FlakyInputError("input does not crash the target under replay");

  auto transcript =
      debugger.run_session(plan, harness, target_path, input_bytes);
  if (!transcript) {
    TriageResult degraded;
    degraded.signal = replay.signal;
    degraded.degraded = true;
    degraded.classification =
        replay.signal.kind == Signal::Kind::ABRT ? "abort" : "other";
    return degraded;
  }

  TriageResult result = parse_debug_transcript(
      *transcript, target_path.filename().string(), options);
  if (result.signal.kind == Signal::Kind::OTHER && result.signal.code == 0) {
    // Transcript carried no signal line: target did not crash under the
    // debugger.
    throw FlakyInputError("target did not crash under the debugger");
  }
  return result;
}

CrashSignature signature_from(const TriageResult& result,
                              const TriageOptions& options) {
  std::vector<std::string> names;
  names.reserve(result.frames.size());
  for (const auto& f : result.frames) names.push_back(f.normalized());

  if (result.classification == "stack-exhaustion") {
    // Collapse the recursion to its repeating cycle so depth differences do
    // not split groups.
    Cycle cycle = find_repeating_cycle(
        names, static_cast<std::size_t>(options.depth_threshold));
    if (cycle.period > 0) {
      auto begin = names.begin() + static_cast<std::ptrdiff_t>(cycle.skip);
      std::vector<std::string> collapsed(
          begin, begin + static_cast<std::ptrdiff_t>(cycle.period));
      collapsed.push_back("<recursion>");
      // Frames below the recursion tail are depth-dependent and dropped.
      names = std::move(collapsed);
    }
  }

  std::string joined;
  std::size_t k = std::min<std::size_t>(names.size(),
                                        static_cast<std::size_t>(options.top_k_frames));
  for (std::size_t i = 0; i < k; ++i) joined += names[i] + "\n";

  CrashSignature sig;
  sig.signal = result.signal;
  sig.frame_hash = sha256_hex16(joined);
  sig.top_frame = names.empty() ? "" : names.front();
  sig.low_confidence = result.frames.empty();
  return sig;
}

MinimizationResult minimize_input(const ExecutionPlan& plan,
                                  const HarnessSpec& harness,
                                  const fs::path& target_path,
                                  std::span<const std::uint8_t> input_bytes,
                                  const CrashSignature& target_signature,
                                  DebuggerAdapter& debugger,
                                  const TriageOptions& options) {
  MinimizationResult result;
  result.original_len = input_bytes.size();
  result.preserved_signature = target_signature;

  int steps = 0;
  bool budget_hit = false;
  auto oracle = [&](const std::vector<std::uint8_t>& candidate) -> bool {
    if (candidate.empty()) return false;
    if (steps >= options.max_steps) {
      budget_hit = true;
      return false;
    }
    ++steps;
    ReplayOutcome replay = replay_one(plan, harness, target_path, candidate);
    if (replay.verdict != ReplayOutcome::Verdict::CRASH) return false;
    if (!(replay.signal == target_signature.signal)) return false;
    try {
      TriageResult t = classify_crash(plan, harness, target_path, candidate,
                                      debugger, options);
      return signature_from(t, options) == target_signature;
    } catch (const FlakyInputError&) {
      return false;
    }
  };

  std::vector<std::uint8_t> current(input_bytes.begin(), input_bytes.end());
  if (!oracle(current))
    throw FlakyInputError("input does not reproduce the target signature");

  // ddmin over byte chunks: complement testing with granularity doubling.
  std::size_t n = 2;
  while (current.size() >= 2 && !budget_hit) {
    std::size_t chunk = (current.size() + n - 1) / n;
    bool reduced = false;
    for (std::size_t start = 0; start < current.size() && !budget_hit;
         start += chunk) {
      std::size_t end = std::min(start + chunk, current.size());
      std::vector<std::uint8_t> complement;
      complement.reserve(current.size() - (end - start));
      complement.insert(complement.end(), current.begin(),
                        current.begin() + static_cast<std::ptrdiff_t>(start));
      complement.insert(complement.end(),
                        current.begin() + static_cast<std::ptrdiff_t>(end),
                        current.end());
      if (oracle(complement)) {
        current = std::move(complement);
        n = std::max<std::size_t>(n - 1, 2);
        reduced = true;
        break;
      }
    }
    if (reduced) continue;
    if (n >= current.size()) break;  // 1-minimal at byte granularity
    n = std::min(n * 2, current.size());
  }

  result.minimized_input = std::move(current);
  result.minimized_len = result.minimized_input.size();
  result.steps = steps;
  result.budget_exhausted = budget_hit;
  return result;
}

TriageReport triage_batch(const ExecutionPlan& plan, const HarnessSpec& harness,
                          const fs::path& target_path,
                          const std::vector<std::vector<std::uint8_t>>& inputs,
                          DebuggerAdapter& debugger,
                          const TriageOptions& options) {
  struct GroupAccum {
    TriageResult result;
    std::vector<std::uint8_t> shortest;
    std::size_t count = 0;
  };
  std::map<CrashSignature, GroupAccum> groups;
  TriageReport report;

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    try {
      TriageResult t =
          classify_crash(plan, harness, target_path, inputs[i], debugger,
                         options);
      CrashSignature sig = signature_from(t, options);
      auto& g = groups[sig];
      ++g.count;
      if (g.count == 1 || inputs[i].size() < g.shortest.size()) {
        g.result = std::move(t);
        g.shortest = inputs[i];
      }
    } catch (const std::exception& e) {
      report.flagged.push_back("input " + std::to_string(i) + ": " + e.what());
    }
  }

  for (auto& [sig, g] : groups) {
    TriageGroup out;
    out.signature = sig;
    out.classification = g.result.classification;
    out.representative_hash = sha256_hex(
        std::span<const std::uint8_t>(g.shortest.data(), g.shortest.size()));
    for (const auto& f : g.result.frames) {
      out.frames.push_back(f.normalized());
      if (out.frames.size() >= 16) break;
    }
    out.member_count = g.count;
    report.groups.push_back(std::move(out));
  }
  return report;
}

std::string TriageReport::to_text() const {
  std::ostringstream out;
  out << "crash groups: " << groups.size() << "\n";
  for (const auto& g : groups) {
    out << "- " << g.signature.signal.name() << " " << g.classification
        << " [" << g.signature.frame_hash.substr(0, 12) << "] members="
        << g.member_count << " rep=" << g.representative_hash.substr(0, 12)
        << "\n";
    for (const auto& f : g.frames) out << "    " << f << "\n";
  }
  if (!flagged.empty()) {
    out << "flagged inputs: " << flagged.size() << "\n";
    for (const auto& f : flagged) out << "  ! " << f << "\n";
  }
  return out.str();
}

std::string TriageReport::to_json() const {
  json j;
  j["groups"] = json::array();
  for (const auto& g : groups) {
    j["groups"].push_back({{"signal", g.signature.signal.name()},
                           {"frame_hash", g.signature.frame_hash},
                           {"top_frame", g.signature.top_frame},
                           {"classification", g.classification},
                           {"representative_hash", g.representative_hash},
                           {"frames", g.frames},
                           {"member_count", g.member_count}});
  }
  j["flagged"] = flagged;
  return j.dump(2) + "\n";
}

std::optional<std::string> FixtureDebugger::run_session(
    const ExecutionPlan&, const HarnessSpec&, const fs::path&,
    std::span<const std::uint8_t>) {
  if (next_ >= transcripts_.size()) return std::nullopt;
  return transcripts_[next_++];
}

GdbDebugger::GdbDebugger(std::string gdb_binary)
    : gdb_binary_(std::move(gdb_binary)) {}

bool GdbDebugger::available(const std::string& gdb_binary) {
  RunOptions opts;
  opts.timeout_ms = 5000;
  auto res = run_process({gdb_binary, "--version"}, opts);
  return res.kind == RunResult::Kind::EXITED && res.exit_code == 0;
}

std::optional<std::string> GdbDebugger::run_session(
    const ExecutionPlan& plan, const HarnessSpec& harness,
    const fs::path& target_path, std::span<const std::uint8_t> input_bytes) {
  // Debugger sessions only make sense for native execution.
  if (plan.mode != ExecutionPlan::Mode::NATIVE) return std::nullopt;

  char tmpl[] = "/tmp/fuzzkit-gdb-XXXXXX";
  char* dir = mkdtemp(tmpl);
  if (!dir) return std::nullopt;
  fs::path work(dir);
  fs::path input_path = work / "input";
  {
    std::ofstream out(input_path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(input_bytes.data()),
              static_cast<std::streamsize>(input_bytes.size()));
  }

  auto target_argv =
      build_replay_argv(plan, harness, fs::absolute(target_path), input_path);

  std::vector<std::string> argv = {gdb_binary_, "--batch", "-q",
                                   "-ex", "set pagination off",
                                   "-ex", "set backtrace limit 300",
                                   "-ex", "run",
                                   "-ex", "bt",
                                   "-ex", "print $_siginfo",
                                   "-ex", "info proc mappings",
                                   "--args"};
  argv.insert(argv.end(), target_argv.begin(), target_argv.end());

  RunOptions opts;
  opts.env = harness.env;
  opts.capture_output = true;
  opts.cwd = work.string();
  opts.timeout_ms = std::max(30000, harness.timeout_ms * 10);
  if (harness.stdin_mode)
    opts.stdin_data =
        std::vector<std::uint8_t>(input_bytes.begin(), input_bytes.end());

  RunResult res = run_process(argv, opts);
  std::error_code ec;
  fs::remove_all(work, ec);
  if (res.kind == RunResult::Kind::SPAWN_ERROR) return std::nullopt;
  return res.output;
}

}  // namespace fuzzkit
