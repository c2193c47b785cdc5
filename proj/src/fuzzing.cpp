#include "fuzzkit/fuzzing.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fuzzkit/errors.hpp"
#include "fuzzkit/proc.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fuzzkit {

namespace {

constexpr int kGracePeriodMs = 5000;
constexpr int kMaxUnparsablePolls = 3;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool monotone_step(const FuzzStatsSample& prev, const FuzzStatsSample& next) {
  return next.relative_time_s >= prev.relative_time_s &&
         next.crashes_saved >= prev.crashes_saved &&
         next.edges_found >= prev.edges_found &&
         next.execs_done >= prev.execs_done;
}

bool criteria_met(const TerminationCriteria& c, const FuzzStatsSample& s) {
  if (c.max_runtime_s && s.relative_time_s >= *c.max_runtime_s) return true;
  if (c.max_crashes && s.crashes_saved >= *c.max_crashes) return true;
  if (c.max_cycles && s.cycles_done >= *c.max_cycles) return true;
  return false;
}

}  // namespace

void HarnessSpec::validate() const {
  if (has_file_placeholder() == stdin_mode)
    throw ConfigError(
        "harness must use exactly one input mechanism (@@ xor stdin)");
  if (timeout_ms <= 0) throw ConfigError("harness timeout_ms must be positive");
}

bool HarnessSpec::has_file_placeholder() const {
  for (const auto& a : argv_template)
    if (a.find("@@") != std::string::npos) return true;
  return false;
}

void TerminationCriteria::validate() const {
  if (!max_runtime_s && !max_crashes && !max_cycles)
    throw ConfigError("at least one termination bound must be set");
  if ((max_runtime_s && *max_runtime_s <= 0) ||
      (max_crashes && *max_crashes <= 0) || (max_cycles && *max_cycles <= 0))
    throw ConfigError("termination bounds must be positive");
}

Arch::Kind detect_host_arch() {
  struct utsname un{};
  if (uname(&un) != 0) return Arch::Kind::UNKNOWN;
  std::string m = un.machine;
  if (m == "x86_64") return Arch::Kind::X86_64;
  if (m.rfind("arm", 0) == 0) return Arch::Kind::ARM_32;
  return Arch::Kind::UNKNOWN;
}

ExecutionPlan plan_execution(const TargetBinary& target, Arch::Kind host_arch,
                             const std::optional<fs::path>& sysroot) {
  ExecutionPlan plan;
  if (target.arch.kind == host_arch) {
    plan.mode = ExecutionPlan::Mode::NATIVE;
    return plan;
  }
  if (!sysroot)
    throw EnvironmentError("emulated execution of " + target.arch.name() +
                           " target requires a sysroot (loader and shared "
                           "libraries) but none is configured");
  plan.mode = ExecutionPlan::Mode::EMULATED;
  plan.sysroot = *sysroot;
  return plan;
}

FuzzStatsSample parse_stats(const std::string& text) {
  FuzzStatsSample s;
  bool have_time = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = trim(line.substr(0, colon));
    std::string value = trim(line.substr(colon + 1));
    std::int64_t num = 0;
    try {
      num = std::stoll(value);
    } catch (...) {
      continue;  // non-numeric values (banner fields etc.) ignored
    }
    if (key == "run_time" || key == "relative_time") {
      s.relative_time_s = num;
      have_time = true;
    } else if (key == "saved_crashes") {
      s.crashes_saved = num;
    } else if (key == "edges_found") {
      s.edges_found = num;
    } else if (key == "execs_done") {
      s.execs_done = num;
    } else if (key == "cycles_done") {
      s.cycles_done = num;
    }
  }
  if (!have_time)
    throw ParseError("stats text missing run_time/relative_time key");
  return s;
}

SleepFn real_sleep() {
  return [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

CampaignResult run_campaign(const CampaignConfig& config,
                            FuzzerAdapter& adapter, const SleepFn& sleep_ms) {
  config.harness.validate();
  config.criteria.validate();
  if (config.corpus.seeds.empty())
    throw ConfigError("campaign corpus must be non-empty: " + config.id);
  if (config.poll_interval_s <= 0)
    throw ConfigError("poll_interval_s must be positive");

  CampaignResult result;
  result.config_ref = config.id;

  if (!adapter.start(config)) {
    result.status = CampaignStatus::FAILED;
    result.failure_diagnostic = "spawn failure: " + adapter.diagnostic();
    return result;
  }

  int unparsable = 0;
  auto shutdown = [&](bool graceful) {
    if (graceful) {
      adapter.request_stop();
      int waited = 0;
      while (adapter.alive() && waited < kGracePeriodMs) {
        sleep_ms(100);
        waited += 100;
      }
    }
    if (adapter.alive()) adapter.kill_now();
  };

  while (true) {
    sleep_ms(config.poll_interval_s * 1000);

    auto stats_text = adapter.read_stats();
    bool parsed = false;
    FuzzStatsSample sample;
    if (stats_text) {
      try {
        sample = parse_stats(*stats_text);
        parsed = true;
      } catch (const ParseError&) {
      }
    }

    if (!parsed) {
      if (!adapter.alive()) {
        if (adapter.crashed_itself()) {
          result.status = CampaignStatus::CATASTROPHIC;
          result.failure_diagnostic =
              "fuzzer process crashed: " + adapter.diagnostic();
        } else {
          result.status = CampaignStatus::FAILED;
          result.failure_diagnostic =
              "fuzzer exited before any termination criterion, exit status " +
              std::to_string(adapter.exit_status());
        }
        return result;
      }
      if (++unparsable >= kMaxUnparsablePolls) {
        shutdown(false);
        result.status = CampaignStatus::CATASTROPHIC;
        result.failure_diagnostic = "stats file unparsable for " +
                                    std::to_string(kMaxUnparsablePolls) +
                                    " consecutive polls";
        return result;
      }
      continue;
    }
    unparsable = 0;

    if (!result.stats_series.empty() &&
        !monotone_step(result.stats_series.back(), sample)) {
      shutdown(false);
      result.status = CampaignStatus::CATASTROPHIC;
      result.failure_diagnostic = "stats series regressed between polls";
      return result;
    }
    result.stats_series.push_back(sample);

    if (criteria_met(config.criteria, sample)) {
      shutdown(true);
      result.crash_inputs = adapter.collect_crashes();
      result.queue_size = adapter.queue_size();
      result.status = CampaignStatus::COMPLETED;
      return result;
    }

    if (!adapter.alive()) {
      if (adapter.crashed_itself()) {
        result.status = CampaignStatus::CATASTROPHIC;
        result.failure_diagnostic =
            "fuzzer process crashed: " + adapter.diagnostic();
      } else {
        result.status = CampaignStatus::FAILED;
        result.failure_diagnostic =
            "fuzzer exited before any termination criterion, exit status " +
            std::to_string(adapter.exit_status());
      }
      return result;
    }
  }
}

std::vector<CampaignResult> run_batch(const std::vector<CampaignConfig>& configs,
                                      const AdapterFactory& factory,
                                      int parallelism, const fs::path& dump_dir,
                                      const SleepFn& sleep_ms) {
  if (parallelism < 1) throw ConfigError("parallelism must be >= 1");
  std::set<std::string> out_dirs;
  for (const auto& c : configs)
    if (!out_dirs.insert(c.output_dir.string()).second)
      throw ConfigError("duplicate campaign output_dir: " +
                        c.output_dir.string());

  fs::create_directories(dump_dir);
  std::vector<CampaignResult> results(configs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      CampaignResult res;
      try {
        auto adapter = factory(configs[i]);
        res = run_campaign(configs[i], *adapter, sleep_ms);
      } catch (const std::exception& e) {
        res.config_ref = configs[i].id;
        res.status = CampaignStatus::FAILED;
        res.failure_diagnostic = e.what();
      }
      results[i] = std::move(res);
    }
  };

  std::vector<std::thread> threads;
  int n = std::min<std::size_t>(parallelism, configs.size());
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  for (const auto& res : results) {
    json dump;
    dump["campaign"] = res.config_ref;
    dump["status"] = res.status == CampaignStatus::COMPLETED ? "completed"
                     : res.status == CampaignStatus::FAILED  ? "failed"
                                                             : "catastrophic";
    if (res.failure_diagnostic) dump["diagnostic"] = *res.failure_diagnostic;
    if (!res.stats_series.empty()) {
      const auto& last = res.stats_series.back();
      dump["final"] = {{"relative_time_s", last.relative_time_s},
                       {"crashes_saved", last.crashes_saved},
                       {"edges_found", last.edges_found},
                       {"execs_done", last.execs_done},
                       {"cycles_done", last.cycles_done}};
    }
    dump["samples"] = res.stats_series.size();
    dump["queue_size"] = res.queue_size;
    dump["crash_count"] = res.crash_inputs.size();
    std::ofstream out(dump_dir / (res.config_ref + ".stats.json"));
    out << dump.dump(2) << '\n';
  }
  return results;
}

// ---------------------------------------------------------------------------
// Mock adapter

MockFuzzerAdapter::Script MockFuzzerAdapter::Script::from_file(
    const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigError("cannot read mock script: " + json_path.string());
  json j = json::parse(in);
  Script s;
  for (const auto& entry : j.at("stats_per_poll"))
    s.stats_per_poll.push_back(entry.get<std::string>());
  if (j.contains("die_at_poll"))
    s.die_at_poll = j["die_at_poll"].get<std::size_t>();
  s.die_status = j.value("die_status", 1);
  s.die_by_crash = j.value("die_by_crash", false);
  s.fail_spawn = j.value("fail_spawn", false);
  s.queue = j.value("queue", std::size_t{0});
  if (j.contains("crashes"))
    for (const auto& c : j["crashes"]) {
      std::string text = c.get<std::string>();
      s.crashes.emplace_back(text.begin(), text.end());
    }
  return s;
}

bool MockFuzzerAdapter::start(const CampaignConfig&) {
  if (script_.fail_spawn) return false;
  running_ = true;
  poll_ = 0;
  return true;
}

bool MockFuzzerAdapter::alive() {
  if (!running_) return false;
  if (script_.die_at_poll && poll_ >= *script_.die_at_poll) {
    running_ = false;
    crashed_ = script_.die_by_crash;
    exit_status_ = script_.die_status;
    return false;
  }
  return true;
}

std::optional<std::string> MockFuzzerAdapter::read_stats() {
  if (!alive()) return std::nullopt;
  if (script_.stats_per_poll.empty()) return std::nullopt;
  std::size_t i = std::min(poll_, script_.stats_per_poll.size() - 1);
  ++poll_;
  return script_.stats_per_poll[i];
}

void MockFuzzerAdapter::request_stop() { running_ = false; }
void MockFuzzerAdapter::kill_now() { running_ = false; }
bool MockFuzzerAdapter::crashed_itself() { return crashed_; }
int MockFuzzerAdapter::exit_status() { return exit_status_; }

std::vector<std::vector<std::uint8_t>> MockFuzzerAdapter::collect_crashes() {
  return script_.crashes;
}

std::size_t MockFuzzerAdapter::queue_size() { return script_.queue; }

std::string MockFuzzerAdapter::diagnostic() {
  if (script_.fail_spawn) return "mock adapter scripted to fail spawn";
  return "mock adapter";
}

// ---------------------------------------------------------------------------
// AFL++ adapter

struct AflAdapter::Impl {
  std::string fuzzer_binary;
  ChildProcess child;
  fs::path out_dir;
  std::string diag;
};

AflAdapter::AflAdapter(std::string fuzzer_binary)
    : impl_(std::make_unique<Impl>()) {
  impl_->fuzzer_binary = std::move(fuzzer_binary);
}

AflAdapter::~AflAdapter() = default;

bool AflAdapter::start(const CampaignConfig& config) {
  fs::path corpus_dir = config.output_dir / "corpus";
  impl_->out_dir = config.output_dir / "afl";
  std::error_code ec;
  fs::create_directories(corpus_dir, ec);
  fs::create_directories(impl_->out_dir, ec);
  save_corpus(config.corpus, corpus_dir);

  std::vector<std::string> argv = {impl_->fuzzer_binary, "-Q",
                                   "-i", corpus_dir.string(),
                                   "-o", impl_->out_dir.string()};
  if (!config.harness.stdin_mode) {
    // afl-fuzz uses the same @@ convention; pass the template through.
  }
  argv.push_back("--");
  for (const auto& a : config.harness.argv_template) {
    std::string arg = a;
    auto pos = arg.find("{target}");
    if (pos != std::string::npos)
      arg.replace(pos, 8, config.target.path.string());
    argv.push_back(arg);
  }

  std::map<std::string, std::string> env = config.harness.env;
  env.emplace("AFL_NO_UI", "1");
  if (!impl_->child.start(argv, env)) {
    impl_->diag = impl_->child.diagnostic();
    return false;
  }
  return true;
}

bool AflAdapter::alive() { return impl_->child.alive(); }

std::optional<std::string> AflAdapter::read_stats() {
  std::ifstream in(impl_->out_dir / "default" / "fuzzer_stats");
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void AflAdapter::request_stop() { impl_->child.terminate(); }
void AflAdapter::kill_now() { impl_->child.kill_now(); }

bool AflAdapter::crashed_itself() { return impl_->child.killed_by_signal(); }

int AflAdapter::exit_status() { return impl_->child.exit_code(); }

std::vector<std::vector<std::uint8_t>> AflAdapter::collect_crashes() {
  std::vector<std::vector<std::uint8_t>> out;
  fs::path crashes = impl_->out_dir / "default" / "crashes";
  std::error_code ec;
  if (!fs::is_directory(crashes, ec)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(crashes)) {
    if (!e.is_regular_file()) continue;
    if (e.path().filename().string().rfind("README", 0) == 0) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    out.emplace_back(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
  }
  return out;
}

std::size_t AflAdapter::queue_size() {
  fs::path queue = impl_->out_dir / "default" / "queue";
  std::error_code ec;
  if (!fs::is_directory(queue, ec)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(queue))
    if (e.is_regular_file()) ++n;
  return n;
}

std::string AflAdapter::diagnostic() { return impl_->diag; }

// ---------------------------------------------------------------------------
// Batch config document

std::vector<CampaignConfig> load_batch_config(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigError("cannot read batch config: " + json_path.string());
  json doc = json::parse(in);

  std::vector<CampaignConfig> configs;
  for (const auto& c : doc.at("campaigns")) {
    CampaignConfig cfg;
    cfg.id = c.at("id").get<std::string>();
    cfg.applet = c.at("applet").get<std::string>();
    cfg.output_dir = c.at("output_dir").get<std::string>();
    cfg.poll_interval_s = c.value("poll_interval_s", 5);

    cfg.target.path = c.at("target").get<std::string>();
    {
      std::ifstream tin(cfg.target.path, std::ios::binary);
      if (tin) {
        std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(tin),
                                        std::istreambuf_iterator<char>()};
        cfg.target.content_hash = fingerprint(bytes);
        cfg.target.size_bytes = bytes.size();
      }
    }

    const auto& h = c.at("harness");
    for (const auto& a : h.at("argv"))
      cfg.harness.argv_template.push_back(a.get<std::string>());
    cfg.harness.stdin_mode = h.value("stdin_mode", false);
    cfg.harness.timeout_ms = h.value("timeout_ms", 1000);
    if (h.contains("env"))
      for (auto& [k, v] : h["env"].items())
        cfg.harness.env[k] = v.get<std::string>();
    if (h.contains("sysroot"))
      cfg.harness.sysroot = h["sysroot"].get<std::string>();

    const auto& crit = c.at("criteria");
    if (crit.contains("max_runtime_s"))
      cfg.criteria.max_runtime_s = crit["max_runtime_s"].get<int>();
    if (crit.contains("max_crashes"))
      cfg.criteria.max_crashes = crit["max_crashes"].get<int>();
    if (crit.contains("max_cycles"))
      cfg.criteria.max_cycles = crit["max_cycles"].get<int>();

    cfg.corpus = load_corpus(c.at("corpus_dir").get<std::string>());
    configs.push_back(std::move(cfg));
  }
  return configs;
}

}  // namespace fuzzkit
