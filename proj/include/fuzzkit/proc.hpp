#pragma once

#include <sys/types.h>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fuzzkit {

struct RunOptions {
  std::map<std::string, std::string> env;  // added on top of the inherited env
  std::optional<std::vector<std::uint8_t>> stdin_data;
  int timeout_ms = -1;  // <0 means no timeout
  std::string cwd;      // empty means inherit
  bool capture_output = false;
};

struct RunResult {
  enum class Kind { EXITED, SIGNALED, TIMED_OUT, SPAWN_ERROR };
  Kind kind = Kind::SPAWN_ERROR;
  int exit_code = -1;  // valid when EXITED
  int signal = 0;      // valid when SIGNALED
  std::int64_t wall_time_ms = 0;
  std::string output;  // combined stdout+stderr when capture_output
  std::string diagnostic;
};

// Run to completion (or timeout, in which case the whole process group is
// killed). argv[0] is resolved via PATH.
RunResult run_process(const std::vector<std::string>& argv,
                      const RunOptions& opts = {});

// A long-running child, used for external fuzzer supervision.
class ChildProcess {
 public:
  ChildProcess() = default;
  ~ChildProcess();
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  // Returns false (with diagnostic) if the child could not be spawned.
  bool start(const std::vector<std::string>& argv,
             const std::map<std::string, std::string>& env,
             const std::string& cwd = "");
  bool alive();
  void terminate();  // SIGTERM to the process group
  void kill_now();   // SIGKILL to the process group
  // Waits without blocking; once the child is gone, status queries are valid.
  bool exited_normally() const { return exited_ && !signaled_; }
  bool killed_by_signal() const { return exited_ && signaled_; }
  int exit_code() const { return exit_code_; }
  int term_signal() const { return signal_; }
  const std::string& diagnostic() const { return diagnostic_; }
  pid_t pid() const { return pid_; }

 private:
  void reap(bool block);

  pid_t pid_ = -1;
  bool exited_ = false;
  bool signaled_ = false;
  int exit_code_ = -1;
  int signal_ = 0;
  std::string diagnostic_;
};

}  // namespace fuzzkit
