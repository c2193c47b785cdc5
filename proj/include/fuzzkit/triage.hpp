#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuzzkit/crashdb.hpp"
#include "fuzzkit/fuzzing.hpp"
#include "fuzzkit/reuse.hpp"

namespace fuzzkit {

struct StackFrame {
  std::string module;
  std::optional<std::string> symbol;
  std::uint64_t offset = 0;

  // Symbol when present, else module+0xRELOFF.
  std::string normalized() const;
};

struct TriageResult {
  Signal signal;
  std::optional<std::uint64_t> fault_address;
  std::vector<StackFrame> frames;
  std::string classification;  // stack-exhaustion | null-deref | abort |
                               // invalid-deref | other
  std::string raw_backtrace;
  bool degraded = false;  // debugger unavailable, signal-only result
};

struct MinimizationResult {
  std::size_t original_len = 0;
  std::size_t minimized_len = 0;
  std::vector<std::uint8_t> minimized_input;
  CrashSignature preserved_signature;
  int steps = 0;
  bool budget_exhausted = false;
};

class DebuggerAdapter {
 public:
  virtual ~DebuggerAdapter() = default;
  // Raw transcript of a debugger session over one crashing execution, or
  // nullopt when the debugger is unavailable.
  virtual std::optional<std::string> run_session(
      const ExecutionPlan& plan, const HarnessSpec& harness,
      const std::filesystem::path& target_path,
      std::span<const std::uint8_t> input_bytes) = 0;
};

// Drives command-line gdb in batch mode (run, bt, siginfo, mappings).
class GdbDebugger : public DebuggerAdapter {
 public:
  explicit GdbDebugger(std::string gdb_binary = "gdb");
  static bool available(const std::string& gdb_binary = "gdb");
  std::optional<std::string> run_session(
      const ExecutionPlan& plan, const HarnessSpec& harness,
      const std::filesystem::path& target_path,
      std::span<const std::uint8_t> input_bytes) override;

 private:
  std::string gdb_binary_;
};

// Serves canned transcripts in order; for parser-level tests.
class FixtureDebugger : public DebuggerAdapter {
 public:
  explicit FixtureDebugger(std::vector<std::string> transcripts)
      : transcripts_(std::move(transcripts)) {}
  std::optional<std::string> run_session(
      const ExecutionPlan&, const HarnessSpec&, const std::filesystem::path&,
      std::span<const std::uint8_t>) override;

 private:
  std::vector<std::string> transcripts_;
  std::size_t next_ = 0;
};

struct TriageOptions {
  int depth_threshold = 200;   // repeating frames for stack-exhaustion
  int top_k_frames = 5;        // frames hashed into the signature
  int max_steps = 5000;        // ddmin oracle execution budget
};

// Parses a debugger batch transcript: signal line, "#N [0xADDR in] SYMBOL ("
// frames, si_addr, and an optional memory-map section for module-relative
// offsets.
TriageResult parse_debug_transcript(const std::string& transcript,
                                    const std::string& target_module,
                                    const TriageOptions& options = {});

TriageResult classify_crash(const ExecutionPlan& plan,
                            const HarnessSpec& harness,
                            const std::filesystem::path& target_path,
                            std::span<const std::uint8_t> input_bytes,
                            DebuggerAdapter& debugger,
                            const TriageOptions& options = {});

CrashSignature signature_from(const TriageResult& result,
                              const TriageOptions& options = {});

MinimizationResult minimize_input(const ExecutionPlan& plan,
                                  const HarnessSpec& harness,
                                  const std::filesystem::path& target_path,
                                  std::span<const std::uint8_t> input_bytes,
                                  const CrashSignature& target_signature,
                                  DebuggerAdapter& debugger,
                                  const TriageOptions& options = {});

struct TriageGroup {
  CrashSignature signature;
  std::string classification;
  std::string representative_hash;  // shortest input in the group
  std::vector<std::string> frames;
  std::size_t member_count = 0;
};

struct TriageReport {
  std::vector<TriageGroup> groups;
  std::vector<std::string> flagged;  // per-input failures, never fatal

  std::string to_text() const;
  std::string to_json() const;
};

TriageReport triage_batch(const ExecutionPlan& plan, const HarnessSpec& harness,
                          const std::filesystem::path& target_path,
                          const std::vector<std::vector<std::uint8_t>>& inputs,
                          DebuggerAdapter& debugger,
                          const TriageOptions& options = {});

}  // namespace fuzzkit
