#include "fuzzkit/reuse.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "fuzzkit/proc.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fuzzkit {

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    char tmpl[] = "/tmp/fuzzkit-replay-XXXXXX";
    char* p = mkdtemp(tmpl);
    if (p) path = p;
  }
  ~TempDir() {
    if (!path.empty()) {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  }
};

}  // namespace

std::vector<std::string> build_replay_argv(const ExecutionPlan& plan,
                                           const HarnessSpec& harness,
                                           const fs::path& target_path,
                                           const fs::path& input_path) {
  std::vector<std::string> argv;
  for (const auto& templ : harness.argv_template) {
    std::string arg = templ;
    auto tpos = arg.find("{target}");
    if (tpos != std::string::npos) {
      if (plan.mode == ExecutionPlan::Mode::EMULATED && arg == "{target}") {
        // user-mode emulation prefix in front of the target binary
        argv.push_back("qemu-arm");
        argv.push_back("-L");
        argv.push_back(plan.sysroot.string());
        argv.push_back(target_path.string());
        continue;
      }
      arg.replace(tpos, 8, target_path.string());
    }
    auto ipos = arg.find("@@");
    if (ipos != std::string::npos)
      arg.replace(ipos, 2, input_path.string());
    argv.push_back(std::move(arg));
  }
  return argv;
}

ReplayOutcome replay_one(const ExecutionPlan& plan, const HarnessSpec& harness,
                         const fs::path& target_path,
                         std::span<const std::uint8_t> input_bytes) {
  ReplayOutcome outcome;
  if (input_bytes.empty()) {
    outcome.verdict = ReplayOutcome::Verdict::EXEC_ERROR;
    outcome.diagnostic = "empty input";
    return outcome;
  }

  TempDir work;
  if (work.path.empty()) {
    outcome.diagnostic = "mkdtemp failed";
    return outcome;
  }

  fs::path input_path = work.path / "input";
  {
    std::ofstream out(input_path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(input_bytes.data()),
              static_cast<std::streamsize>(input_bytes.size()));
    if (!out) {
      outcome.diagnostic = "input materialization failed";
      return outcome;
    }
  }

  RunOptions opts;
  opts.env = harness.env;
  opts.timeout_ms = harness.timeout_ms;
  opts.cwd = work.path.string();
  if (harness.stdin_mode)
    opts.stdin_data =
        std::vector<std::uint8_t>(input_bytes.begin(), input_bytes.end());

  auto argv = build_replay_argv(plan, harness, fs::absolute(target_path),
                                input_path);
  RunResult run = run_process(argv, opts);
  outcome.wall_time_ms = run.wall_time_ms;

  switch (run.kind) {
    case RunResult::Kind::SIGNALED: {
      Signal sig = Signal::from_number(run.signal);
      if (sig.kind != Signal::Kind::OTHER) {
        outcome.verdict = ReplayOutcome::Verdict::CRASH;
        outcome.signal = sig;
      } else {
        outcome.verdict = ReplayOutcome::Verdict::EXEC_ERROR;
        outcome.diagnostic = "terminated by non-crash signal " + sig.name();
      }
      break;
    }
    case RunResult::Kind::EXITED:
      outcome.verdict = ReplayOutcome::Verdict::CLEAN;
      outcome.exit_code = run.exit_code;
      break;
    case RunResult::Kind::TIMED_OUT:
      outcome.verdict = ReplayOutcome::Verdict::TIMEOUT;
      break;
    case RunResult::Kind::SPAWN_ERROR:
      outcome.verdict = ReplayOutcome::Verdict::EXEC_ERROR;
      outcome.diagnostic = run.diagnostic;
      break;
  }
  return outcome;
}

ReplaySummary screen_target(const TargetBinary& target, CrashStore& store,
                            const CrashFilter& filter,
                            const HarnessSpec& harness,
                            const ExecutionPlan& plan,
                            const ScreenOptions& options) {
  harness.validate();
  auto records = store.query(filter);
  if (records.empty())
    throw InputError("empty crash set: no stored crashes match the filter");

  struct Item {
    CrashRecord record;
    std::vector<std::uint8_t> input;
    ReplayOutcome outcome;
    std::optional<CrashSignature> signature;
  };
  std::vector<Item> items(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    items[i].record = records[i];
    items[i].input = store.load_blob(records[i].input_hash);
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= items.size()) return;
      Item& item = items[i];
      item.outcome =
          replay_one(plan, harness, target.path, item.input);
      item.outcome.record_id = item.record.id;
      if (item.outcome.verdict == ReplayOutcome::Verdict::CRASH) {
        if (options.signaturer) {
          item.signature = options.signaturer(item.input, item.outcome.signal);
        } else {
          CrashSignature sig;
          sig.signal = item.outcome.signal;
          sig.frame_hash = sha256_hex16("");
          sig.low_confidence = true;
          item.signature = sig;
        }
      }
    }
  };

  int n = std::max(1, options.parallelism);
  std::vector<std::thread> threads;
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  ReplaySummary summary;
  summary.target_hash = target.content_hash;
  for (auto& item : items) {
    summary.per_outcome.push_back(item.outcome);
    switch (item.outcome.verdict) {
      case ReplayOutcome::Verdict::CRASH:
        ++summary.crashing;
        if (item.signature) summary.unique_signatures.insert(*item.signature);
        if (options.write_back) {
          CrashMeta meta;
          meta.component = item.record.component;
          meta.applet = item.record.applet;
          meta.source_target_hash = target.content_hash;
          meta.source_version = target.version;
          meta.source_arch = target.arch;
          meta.discovery = Discovery::REUSE;
          meta.signal = item.outcome.signal;
          meta.signature = item.signature;
          store.insert(item.input, meta);
        }
        break;
      case ReplayOutcome::Verdict::TIMEOUT:
        ++summary.timeouts;
        break;
      case ReplayOutcome::Verdict::EXEC_ERROR:
        ++summary.exec_errors;
        break;
      case ReplayOutcome::Verdict::CLEAN:
        break;
    }
  }
  summary.total_replayed = summary.per_outcome.size();
  summary.unique_crashing = summary.unique_signatures.size();
  return summary;
}

std::string ReplaySummary::to_json() const {
  json j;
  j["target_hash"] = target_hash;
  j["total_replayed"] = total_replayed;
  j["crashing"] = crashing;
  j["unique_crashing"] = unique_crashing;
  j["timeouts"] = timeouts;
  j["exec_errors"] = exec_errors;
  j["signatures"] = json::array();
  for (const auto& s : unique_signatures)
    j["signatures"].push_back({{"signal", s.signal.name()},
                               {"frame_hash", s.frame_hash},
                               {"top_frame", s.top_frame}});
  j["outcomes"] = json::array();
  for (const auto& o : per_outcome) {
    json oj;
    oj["record_id"] = o.record_id;
    switch (o.verdict) {
      case ReplayOutcome::Verdict::CRASH:
        oj["verdict"] = "crash";
        oj["signal"] = o.signal.name();
        break;
      case ReplayOutcome::Verdict::CLEAN:
        oj["verdict"] = "clean";
        oj["exit_code"] = o.exit_code;
        break;
      case ReplayOutcome::Verdict::TIMEOUT:
        oj["verdict"] = "timeout";
        break;
      case ReplayOutcome::Verdict::EXEC_ERROR:
        oj["verdict"] = "exec_error";
        oj["diagnostic"] = o.diagnostic;
        break;
    }
    oj["wall_time_ms"] = o.wall_time_ms;
    j["outcomes"].push_back(oj);
  }
  return j.dump(2) + "\n";
}

OverlapReport compare_with_fuzzing(const std::set<CrashSignature>& reuse_uniques,
                                   const std::set<CrashSignature>& fuzz_uniques) {
  OverlapReport report;
  for (const auto& s : reuse_uniques)
    if (fuzz_uniques.count(s))
      ++report.common;
    else
      ++report.reuse_only;
  for (const auto& s : fuzz_uniques)
    if (!reuse_uniques.count(s)) ++report.fuzz_only;
  return report;
}

}  // namespace fuzzkit
