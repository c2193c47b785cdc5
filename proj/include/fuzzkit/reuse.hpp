#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fuzzkit/crashdb.hpp"
#include "fuzzkit/fuzzing.hpp"

namespace fuzzkit {

struct ReplayOutcome {
  enum class Verdict { CRASH, CLEAN, TIMEOUT, EXEC_ERROR };
  std::string record_id;
  Verdict verdict = Verdict::EXEC_ERROR;
  Signal signal;      // valid for CRASH
  int exit_code = 0;  // valid for CLEAN
  std::string diagnostic;
  std::int64_t wall_time_ms = 0;
};

// argv with {target} and @@ substituted, plus the emulation prefix when the
// plan requires it.
std::vector<std::string> build_replay_argv(
    const ExecutionPlan& plan, const HarnessSpec& harness,
    const std::filesystem::path& target_path,
    const std::filesystem::path& input_path);

// One execution in a fresh temp working directory; never throws per-input.
ReplayOutcome replay_one(const ExecutionPlan& plan, const HarnessSpec& harness,
                         const std::filesystem::path& target_path,
                         std::span<const std::uint8_t> input_bytes);

struct ReplaySummary {
  std::string target_hash;
  std::size_t total_replayed = 0;
  std::size_t crashing = 0;
  std::size_t unique_crashing = 0;
  std::size_t timeouts = 0;
  std::size_t exec_errors = 0;
  std::vector<ReplayOutcome> per_outcome;
  std::set<CrashSignature> unique_signatures;

  std::string to_json() const;
};

// Derives a dedup signature for a confirmed-crashing input. Wired to the
// triage module by the CLI; when absent, screening falls back to
// signal-only signatures.
using Signaturer = std::function<CrashSignature(
    std::span<const std::uint8_t> input_bytes, Signal signal)>;

struct ScreenOptions {
  int parallelism = 1;
  Signaturer signaturer;
  bool write_back = true;  // record CRASH outcomes as discovery=REUSE
};

ReplaySummary screen_target(const TargetBinary& target, CrashStore& store,
                            const CrashFilter& filter,
                            const HarnessSpec& harness,
                            const ExecutionPlan& plan,
                            const ScreenOptions& options = {});

struct OverlapReport {
  std::size_t reuse_only = 0;
  std::size_t fuzz_only = 0;
  std::size_t common = 0;
};

OverlapReport compare_with_fuzzing(const std::set<CrashSignature>& reuse_uniques,
                                   const std::set<CrashSignature>& fuzz_uniques);

}  // namespace fuzzkit
