#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fuzzkit/inventory.hpp"
#include "fuzzkit/seedgen.hpp"

namespace fuzzkit {

struct HarnessSpec {
  // Placeholders: "@@" = input-file path, "{target}" = binary path.
  std::vector<std::string> argv_template;
  bool stdin_mode = false;
  std::map<std::string, std::string> env;
  std::optional<std::filesystem::path> sysroot;
  int timeout_ms = 1000;

  // Exactly one input mechanism: "@@" present XOR stdin_mode.
  void validate() const;
  bool has_file_placeholder() const;
};

struct TerminationCriteria {
  std::optional<int> max_runtime_s;
  std::optional<int> max_crashes;
  std::optional<int> max_cycles;

  void validate() const;  // at least one bound set
};

struct CampaignConfig {
  std::string id;
  TargetBinary target;
  std::string applet;
  HarnessSpec harness;
  SeedCorpus corpus;
  TerminationCriteria criteria;
  std::filesystem::path output_dir;
  int poll_interval_s = 5;
};

struct FuzzStatsSample {
  std::int64_t relative_time_s = 0;
  std::int64_t crashes_saved = 0;
  std::int64_t edges_found = 0;
  std::int64_t execs_done = 0;
  std::int64_t cycles_done = 0;
};

enum class CampaignStatus { COMPLETED, FAILED, CATASTROPHIC };

struct CampaignResult {
  std::string config_ref;
  CampaignStatus status = CampaignStatus::FAILED;
  std::vector<FuzzStatsSample> stats_series;
  std::vector<std::vector<std::uint8_t>> crash_inputs;
  std::size_t queue_size = 0;
  std::optional<std::string> failure_diagnostic;
};

struct ExecutionPlan {
  enum class Mode { NATIVE, EMULATED };
  Mode mode = Mode::NATIVE;
  std::filesystem::path sysroot;  // valid when EMULATED
};

ExecutionPlan plan_execution(const TargetBinary& target, Arch::Kind host_arch,
                             const std::optional<std::filesystem::path>&
                                 sysroot);
Arch::Kind detect_host_arch();

// De-facto "key : value" stats file format.
FuzzStatsSample parse_stats(const std::string& stats_file_text);

class FuzzerAdapter {
 public:
  virtual ~FuzzerAdapter() = default;
  // False on spawn failure; diagnostic() explains.
  virtual bool start(const CampaignConfig& config) = 0;
  virtual bool alive() = 0;
  // Raw stats text, or nullopt if not yet available/readable.
  virtual std::optional<std::string> read_stats() = 0;
  virtual void request_stop() = 0;  // graceful
  virtual void kill_now() = 0;
  // Valid once !alive(): did the fuzzer process itself crash?
  virtual bool crashed_itself() = 0;
  virtual int exit_status() = 0;
  virtual std::vector<std::vector<std::uint8_t>> collect_crashes() = 0;
  virtual std::size_t queue_size() = 0;
  virtual std::string diagnostic() = 0;
};

// Wraps an external AFL++-compatible fuzzer in binary-only (QEMU) mode,
// reading its standard output directory layout.
class AflAdapter : public FuzzerAdapter {
 public:
  explicit AflAdapter(std::string fuzzer_binary = "afl-fuzz");
  ~AflAdapter() override;
  bool start(const CampaignConfig& config) override;
  bool alive() override;
  std::optional<std::string> read_stats() override;
  void request_stop() override;
  void kill_now() override;
  bool crashed_itself() override;
  int exit_status() override;
  std::vector<std::vector<std::uint8_t>> collect_crashes() override;
  std::size_t queue_size() override;
  std::string diagnostic() override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Scripted in-process adapter for tests: serves a fixed sequence of stats
// texts, one per poll, and can be told to die or misbehave at a given poll.
class MockFuzzerAdapter : public FuzzerAdapter {
 public:
  struct Script {
    std::vector<std::string> stats_per_poll;  // last entry repeats
    std::optional<std::size_t> die_at_poll;   // process exits at this poll
    int die_status = 1;
    bool die_by_crash = false;  // simulates the fuzzer itself crashing
    bool fail_spawn = false;
    std::vector<std::vector<std::uint8_t>> crashes;
    std::size_t queue = 0;

    static Script from_file(const std::filesystem::path& json_path);
  };

  explicit MockFuzzerAdapter(Script script) : script_(std::move(script)) {}
  bool start(const CampaignConfig& config) override;
  bool alive() override;
  std::optional<std::string> read_stats() override;
  void request_stop() override;
  void kill_now() override;
  bool crashed_itself() override;
  int exit_status() override;
  std::vector<std::vector<std::uint8_t>> collect_crashes() override;
  std::size_t queue_size() override;
  std::string diagnostic() override;

 private:
  Script script_;
  std::size_t poll_ = 0;
  bool running_ = false;
  bool crashed_ = false;
  int exit_status_ = 0;
};

// Injectable sleep so tests can run campaigns without wall-clock delays.
using SleepFn = std::function<void(int ms)>;
SleepFn real_sleep();

CampaignResult run_campaign(const CampaignConfig& config,
                            FuzzerAdapter& adapter,
                            const SleepFn& sleep_ms = real_sleep());

using AdapterFactory =
    std::function<std::unique_ptr<FuzzerAdapter>(const CampaignConfig&)>;

std::vector<CampaignResult> run_batch(
    const std::vector<CampaignConfig>& configs, const AdapterFactory& factory,
    int parallelism, const std::filesystem::path& dump_dir,
    const SleepFn& sleep_ms = real_sleep());

// Batch config document (JSON) listing campaigns; see README for the schema.
std::vector<CampaignConfig> load_batch_config(
    const std::filesystem::path& json_path);

}  // namespace fuzzkit
