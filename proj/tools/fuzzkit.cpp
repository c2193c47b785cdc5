// fuzzkit: scan -> seeds -> fuzz -> store -> reuse -> triage -> report
// pipeline for batch fuzzing of embedded-Linux utility binaries.

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fuzzkit/crashdb.hpp"
#include "fuzzkit/errors.hpp"
#include "fuzzkit/fuzzing.hpp"
#include "fuzzkit/hash.hpp"
#include "fuzzkit/inventory.hpp"
#include "fuzzkit/proc.hpp"
#include "fuzzkit/report.hpp"
#include "fuzzkit/reuse.hpp"
#include "fuzzkit/seedgen.hpp"
#include "fuzzkit/triage.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fuzzkit;

namespace {

struct ToolConfig {
  fs::path store_dir = "crashstore";
  fs::path dump_dir = "stats";
  std::map<std::string, fs::path> sysroots;  // arch name -> path
  ProviderConfig provider;
  // harness profiles per applet; "@@"/"{target}" as in the external fuzzer
  std::map<std::string, HarnessSpec> profiles;
};

ToolConfig load_tool_config(const std::string& path) {
  ToolConfig cfg;
  cfg.profiles["awk"] = HarnessSpec{{"{target}", "awk", "-f", "@@"}};
  cfg.profiles["dc"] = HarnessSpec{{"{target}", "dc", "@@"}};
  cfg.profiles["toy"] = HarnessSpec{{"{target}", "-f", "@@"}};
  if (path.empty()) return cfg;

  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  json j = json::parse(in);
  if (j.contains("store_dir")) cfg.store_dir = j["store_dir"].get<std::string>();
  if (j.contains("dump_dir")) cfg.dump_dir = j["dump_dir"].get<std::string>();
  if (cfg.store_dir == cfg.dump_dir)
    throw ConfigError("store_dir and dump_dir must be distinct");
  if (j.contains("sysroots"))
    for (auto& [k, v] : j["sysroots"].items())
      cfg.sysroots[k] = v.get<std::string>();
  if (j.contains("provider")) {
    const auto& p = j["provider"];
    cfg.provider.model_id = p.value("model_id", cfg.provider.model_id);
    cfg.provider.temperature = p.value("temperature", cfg.provider.temperature);
    cfg.provider.endpoint = p.value("endpoint", cfg.provider.endpoint);
    cfg.provider.credentials_env_var =
        p.value("credentials_env_var", cfg.provider.credentials_env_var);
  }
  if (j.contains("profiles")) {
    for (auto& [applet, prof] : j["profiles"].items()) {
      HarnessSpec h;
      for (const auto& a : prof.at("argv"))
        h.argv_template.push_back(a.get<std::string>());
      h.stdin_mode = prof.value("stdin_mode", false);
      h.timeout_ms = prof.value("timeout_ms", 1000);
      cfg.profiles[applet] = std::move(h);
    }
  }
  return cfg;
}

TargetBinary load_target(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read target binary: " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  TargetBinary t;
  t.path = path;
  t.size_bytes = bytes.size();
  t.content_hash = fingerprint(bytes);
  if (bytes.size() >= 20 && bytes[0] == 0x7f && bytes[1] == 'E') {
    bool be = bytes[5] == 2;
    std::uint16_t machine =
        be ? static_cast<std::uint16_t>(bytes[18] << 8 | bytes[19])
           : static_cast<std::uint16_t>(bytes[19] << 8 | bytes[18]);
    t.arch = Arch::from_machine(machine);
  }
  if (auto cv = extract_version(bytes)) {
    t.component = cv->first;
    t.version = cv->second;
  }
  return t;
}

HarnessSpec profile_for(const ToolConfig& cfg, const std::string& applet) {
  auto it = cfg.profiles.find(applet);
  if (it != cfg.profiles.end()) return it->second;
  return HarnessSpec{{"{target}", applet, "@@"}};
}

Signaturer gdb_signaturer(const ExecutionPlan& plan, const HarnessSpec& harness,
                          const fs::path& target_path) {
  if (!GdbDebugger::available()) return nullptr;
  auto debugger = std::make_shared<GdbDebugger>();
  return [=](std::span<const std::uint8_t> input, Signal) {
    try {
      TriageResult t =
          classify_crash(plan, harness, target_path, input, *debugger);
      return signature_from(t);
    } catch (const std::exception&) {
      CrashSignature degraded;
      degraded.frame_hash = sha256_hex16("");
      degraded.low_confidence = true;
      return degraded;
    }
  };
}

// Coverage oracle backed by afl-showmap, for `seeds --minimize`.
class ShowmapOracle : public CoverageOracle {
 public:
  ShowmapOracle(HarnessSpec harness, fs::path target)
      : harness_(std::move(harness)), target_(std::move(target)) {}

  std::optional<std::set<std::uint64_t>> measure(
      std::span<const std::uint8_t> bytes) override {
    char tmpl[] = "/tmp/fuzzkit-showmap-XXXXXX";
    char* dir = mkdtemp(tmpl);
    if (!dir) return std::nullopt;
    fs::path work(dir);
    fs::path input = work / "input";
    fs::path map = work / "map";
    {
      std::ofstream out(input, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }
    std::vector<std::string> argv = {"afl-showmap", "-Q", "-o", map.string(),
                                     "--"};
    ExecutionPlan native;
    auto target_argv = build_replay_argv(native, harness_, target_, input);
    argv.insert(argv.end(), target_argv.begin(), target_argv.end());
    RunOptions opts;
    opts.timeout_ms = 30000;
    auto res = run_process(argv, opts);
    std::optional<std::set<std::uint64_t>> edges;
    if (res.kind == RunResult::Kind::EXITED) {
      std::set<std::uint64_t> e;
      std::ifstream in(map);
      std::string line;
      while (std::getline(in, line)) {
        auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        try {
          e.insert(std::stoull(line.substr(0, colon)));
        } catch (...) {
        }
      }
      edges = std::move(e);
    }
    std::error_code ec;
    fs::remove_all(work, ec);
    return edges;
  }

 private:
  HarnessSpec harness_;
  fs::path target_;
};

int cmd_scan(const std::string& root, int max_depth, bool as_json) {
  ScanResult result = scan_filesystem(root, max_depth);
  VersionTable table = inventory_report(result.targets);
  if (as_json)
    std::cout << table.to_json();
  else
    std::cout << table.to_csv();
  for (const auto& d : result.diagnostics) std::cerr << "warning: " << d << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fuzzing-campaign toolkit: inventory, seed generation, "
               "campaign orchestration, crash storage, reuse screening, "
               "triage, and reporting"};
  app.require_subcommand(1);

  std::string config_path;
  bool as_json = false;
  int jobs = 1;
  app.add_option("--config", config_path, "tool configuration file (JSON)");
  app.add_flag("--json", as_json, "machine-readable output");
  app.add_option("--jobs", jobs, "global parallelism cap")->check(CLI::PositiveNumber);

  // scan
  auto* scan = app.add_subcommand("scan", "inventory a filesystem tree");
  std::string scan_root;
  int max_depth = 32;
  scan->add_option("root", scan_root, "extracted filesystem root")->required();
  scan->add_option("--max-depth", max_depth, "directory recursion limit");

  // seeds
  auto* seeds = app.add_subcommand("seeds", "generate a seed corpus");
  std::string seeds_applet, seeds_mode = "llm", seeds_out, seeds_fixture;
  std::string seeds_minimize_target;
  int min_seeds = 10, max_attempts = 3, rand_count = 10, rand_min = 1,
      rand_max = 128;
  std::uint64_t rand_seed = 1;
  seeds->add_option("--applet", seeds_applet)->required();
  seeds->add_option("--mode", seeds_mode)->check(CLI::IsMember({"llm", "random"}));
  seeds->add_option("--out", seeds_out)->required();
  seeds->add_option("--fixture", seeds_fixture,
                    "canned-response directory (offline provider)");
  seeds->add_option("--min-seeds", min_seeds);
  seeds->add_option("--max-attempts", max_attempts);
  seeds->add_option("--count", rand_count);
  seeds->add_option("--min-len", rand_min);
  seeds->add_option("--max-len", rand_max);
  seeds->add_option("--seed", rand_seed, "rng seed for random mode");
  seeds->add_option("--minimize-target", seeds_minimize_target,
                    "run afl-showmap corpus minimization against this binary");

  // fuzz
  auto* fuzz = app.add_subcommand("fuzz", "run a batch of campaigns");
  std::string fuzz_config, fuzz_adapter = "afl", mock_script, fuzz_dump,
              fuzz_store, fuzz_component = "busybox";
  fuzz->add_option("--batch", fuzz_config, "batch campaign document (JSON)")
      ->required();
  fuzz->add_option("--adapter", fuzz_adapter)
      ->check(CLI::IsMember({"afl", "mock"}));
  fuzz->add_option("--mock-script", mock_script);
  fuzz->add_option("--dump-dir", fuzz_dump);
  fuzz->add_option("--store", fuzz_store, "ingest crashes into this store");
  fuzz->add_option("--component", fuzz_component);

  // reuse
  auto* reuse = app.add_subcommand(
      "reuse", "screen a target against the crash database (no fuzzing)");
  std::string reuse_mode = "screen";
  std::string reuse_target, reuse_store, reuse_component, reuse_applet,
      reuse_out, reuse_sysroot;
  reuse->add_option("mode", reuse_mode)->check(CLI::IsMember({"screen"}));
  reuse->add_option("--target", reuse_target)->required();
  reuse->add_option("--store", reuse_store);
  reuse->add_option("--component", reuse_component);
  reuse->add_option("--applet", reuse_applet);
  reuse->add_option("--out", reuse_out, "write the JSON summary here");
  reuse->add_option("--sysroot", reuse_sysroot);

  // triage
  auto* triage = app.add_subcommand("triage", "classify and dedup crashes");
  std::string tr_target, tr_store, tr_applet, tr_component, tr_out;
  bool tr_minimize = false;
  triage->add_option("--target", tr_target)->required();
  triage->add_option("--store", tr_store);
  triage->add_option("--applet", tr_applet);
  triage->add_option("--component", tr_component);
  triage->add_option("--out", tr_out);
  triage->add_flag("--minimize", tr_minimize,
                   "ddmin-minimize each group representative");

  // report
  auto* report = app.add_subcommand("report", "comparisons and overlaps");
  std::string rep_kind, rep_a, rep_b, rep_format = "csv", rep_out;
  report->add_option("--kind", rep_kind)
      ->required()
      ->check(CLI::IsMember({"compare", "overlap", "inventory"}));
  report->add_option("--a", rep_a, "first input (series/signature/root)");
  report->add_option("--b", rep_b, "second input");
  report->add_option("--format", rep_format)
      ->check(CLI::IsMember({"csv", "json", "gnuplot"}));
  report->add_option("--out", rep_out);

  CLI11_PARSE(app, argc, argv);

  try {
    ToolConfig cfg = load_tool_config(config_path);

    if (*scan) return cmd_scan(scan_root, max_depth, as_json);

    if (*seeds) {
      SeedCorpus corpus;
      if (seeds_mode == "random") {
        corpus = generate_random_corpus(rand_count, rand_min, rand_max,
                                        rand_seed);
        corpus.applet = seeds_applet;
      } else {
        std::unique_ptr<Provider> provider;
        if (!seeds_fixture.empty())
          provider = std::make_unique<FixtureProvider>(seeds_fixture);
        else
          provider = std::make_unique<HttpProvider>(cfg.provider);
        corpus = generate_llm_corpus(*provider, seeds_applet, min_seeds,
                                     max_attempts);
      }
      if (!seeds_minimize_target.empty()) {
        HarnessSpec harness = profile_for(cfg, seeds_applet);
        ShowmapOracle oracle(harness, seeds_minimize_target);
        // afl-showmap must be reachable for the coverage measurements
        RunOptions probe_opts;
        probe_opts.timeout_ms = 5000;
        auto probe = run_process({"afl-showmap", "-h"}, probe_opts);
        if (probe.kind == RunResult::Kind::SPAWN_ERROR)
          throw EnvironmentError("afl-showmap not found on PATH");
        corpus = minimize_corpus(corpus, oracle);
      }
      save_corpus(corpus, seeds_out);
      std::cout << "wrote " << corpus.seeds.size() << " seeds to " << seeds_out
                << "\n";
      return 0;
    }

    if (*fuzz) {
      auto configs = load_batch_config(fuzz_config);
      fs::path dump = fuzz_dump.empty() ? cfg.dump_dir : fs::path(fuzz_dump);
      AdapterFactory factory;
      if (fuzz_adapter == "mock") {
        if (mock_script.empty())
          throw ConfigError("--mock-script required with --adapter mock");
        auto script = MockFuzzerAdapter::Script::from_file(mock_script);
        factory = [script](const CampaignConfig&) {
          return std::make_unique<MockFuzzerAdapter>(script);
        };
      } else {
        factory = [](const CampaignConfig&) {
          return std::make_unique<AflAdapter>();
        };
      }
      auto results = run_batch(configs, factory, jobs, dump);

      std::unique_ptr<CrashStore> store;
      if (!fuzz_store.empty())
        store = std::make_unique<CrashStore>(CrashStore::open(fuzz_store));
      std::size_t completed = 0, failed = 0, ingested = 0;
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        if (r.status == CampaignStatus::COMPLETED)
          ++completed;
        else
          ++failed;
        if (store) {
          for (const auto& input : r.crash_inputs) {
            if (input.empty()) continue;
            CrashMeta meta;
            meta.component = fuzz_component;
            meta.applet = configs[i].applet;
            meta.source_target_hash = configs[i].target.content_hash;
            meta.source_version = configs[i].target.version;
            meta.source_arch = configs[i].target.arch;
            meta.discovery = Discovery::FUZZING;
            store->insert(input, meta);
            ++ingested;
          }
        }
      }
      std::cout << completed << " completed, " << failed
                << " failed/catastrophic";
      if (store) std::cout << ", " << ingested << " crashes ingested";
      std::cout << "\n";
      return 0;
    }

    if (*reuse) {
      TargetBinary target = load_target(reuse_target);
      fs::path store_dir =
          reuse_store.empty() ? cfg.store_dir : fs::path(reuse_store);
      CrashStore store = CrashStore::open(store_dir);

      CrashFilter filter;
      if (!reuse_component.empty()) filter.component = reuse_component;
      if (!reuse_applet.empty()) filter.applet = reuse_applet;

      std::string applet = reuse_applet;
      if (applet.empty()) {
        auto records = store.query(filter);
        if (!records.empty()) applet = records.front().applet;
      }
      HarnessSpec harness = profile_for(cfg, applet);
      std::optional<fs::path> sysroot;
      if (!reuse_sysroot.empty()) sysroot = reuse_sysroot;
      if (!sysroot) {
        auto it = cfg.sysroots.find(target.arch.name());
        if (it != cfg.sysroots.end()) sysroot = it->second;
      }
      ExecutionPlan plan =
          plan_execution(target, detect_host_arch(), sysroot);

      ScreenOptions options;
      options.parallelism = jobs;
      options.signaturer = gdb_signaturer(plan, harness, target.path);
      ReplaySummary summary =
          screen_target(target, store, filter, harness, plan, options);
      std::string doc = summary.to_json();
      if (!reuse_out.empty()) {
        std::ofstream out(reuse_out);
        out << doc;
      }
      if (as_json || reuse_out.empty()) {
        std::cout << doc;
      } else {
        std::cout << "replayed " << summary.total_replayed << ", crashing "
                  << summary.crashing << ", unique " << summary.unique_crashing
                  << ", timeouts " << summary.timeouts << "\n";
      }
      return 0;
    }

    if (*triage) {
      TargetBinary target = load_target(tr_target);
      fs::path store_dir = tr_store.empty() ? cfg.store_dir : fs::path(tr_store);
      CrashStore store = CrashStore::open(store_dir);

      CrashFilter filter;
      if (!tr_component.empty()) filter.component = tr_component;
      if (!tr_applet.empty()) filter.applet = tr_applet;
      auto records = store.query(filter);
      if (records.empty()) throw InputError("no crashes match the selection");

      std::string applet = tr_applet.empty() ? records.front().applet : tr_applet;
      HarnessSpec harness = profile_for(cfg, applet);
      ExecutionPlan plan =
          plan_execution(target, detect_host_arch(), std::nullopt);
      if (!GdbDebugger::available())
        throw EnvironmentError("gdb not found on PATH; triage needs it");
      GdbDebugger debugger;

      std::vector<std::vector<std::uint8_t>> inputs;
      for (const auto& r : records) inputs.push_back(store.load_blob(r.input_hash));
      TriageReport rep = triage_batch(plan, harness, target.path, inputs,
                                      debugger);

      if (tr_minimize) {
        for (auto& g : rep.groups) {
          auto blob = store.load_blob(g.representative_hash);
          if (blob.empty()) continue;
          try {
            auto m = minimize_input(plan, harness, target.path, blob,
                                    g.signature, debugger);
            g.representative_hash = sha256_hex(std::span<const std::uint8_t>(
                m.minimized_input.data(), m.minimized_input.size()));
          } catch (const FlakyInputError&) {
          }
        }
      }

      std::string doc = as_json ? rep.to_json() : rep.to_text();
      if (!tr_out.empty()) {
        std::ofstream out(tr_out);
        out << doc;
      } else {
        std::cout << doc;
      }
      return 0;
    }

    if (*report) {
      EmitFormat format = rep_format == "json"      ? EmitFormat::JSON
                          : rep_format == "gnuplot" ? EmitFormat::GNUPLOT
                                                    : EmitFormat::CSV;
      std::string doc;
      if (rep_kind == "inventory") {
        if (rep_a.empty()) throw ConfigError("--a <root> required");
        ScanResult result = scan_filesystem(rep_a, 32);
        VersionTable table = inventory_report(result.targets);
        doc = format == EmitFormat::JSON ? table.to_json() : table.to_csv();
      } else if (rep_kind == "overlap") {
        auto load_sigs = [](const std::string& path) {
          std::ifstream in(path);
          if (!in) throw InputError("cannot read signature set: " + path);
          json j = json::parse(in);
          std::set<CrashSignature> sigs;
          for (const auto& s : j) {
            CrashSignature sig;
            sig.signal =
                Signal::from_name(s.at("signal").get<std::string>())
                    .value_or(Signal{});
            sig.frame_hash = s.at("frame_hash").get<std::string>();
            sigs.insert(sig);
          }
          return sigs;
        };
        if (rep_a.empty() || rep_b.empty())
          throw ConfigError("--a and --b signature files required");
        doc = emit(overlap(load_sigs(rep_a), load_sigs(rep_b), rep_a, rep_b),
                   format);
      } else {  // compare
        auto load_series = [](const std::string& path) {
          std::ifstream in(path);
          if (!in) throw InputError("cannot read series: " + path);
          json j = json::parse(in);
          ConditionSeries cs;
          cs.condition = j.value("condition", "without-llm") ==
                                 std::string("with-llm")
                             ? SeedCondition::WITH_LLM
                             : SeedCondition::WITHOUT_LLM;
          cs.target_id = j.value("target_id", "");
          cs.applet = j.value("applet", "");
          for (const auto& s : j.at("series")) {
            FuzzStatsSample sample;
            sample.relative_time_s = s.value("relative_time_s", 0);
            sample.crashes_saved = s.value("crashes_saved", 0);
            sample.edges_found = s.value("edges_found", 0);
            sample.execs_done = s.value("execs_done", 0);
            sample.cycles_done = s.value("cycles_done", 0);
            cs.series.push_back(sample);
          }
          return cs;
        };
        if (rep_a.empty() || rep_b.empty())
          throw ConfigError("--a and --b series files required");
        doc = emit(compare_conditions(load_series(rep_a), load_series(rep_b)),
                   format);
      }
      if (!rep_out.empty()) {
        std::ofstream out(rep_out);
        out << doc;
      } else {
        std::cout << doc;
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const EnvironmentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
