#include "fuzzkit/proc.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

namespace fuzzkit {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ms_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() -
                                                               t0)
      .count();
}

[[noreturn]] void child_exec(const std::vector<std::string>& argv,
                             const std::map<std::string, std::string>& env,
                             const std::string& cwd, int stdin_fd,
                             int stdout_fd) {
  setpgid(0, 0);
  if (!cwd.empty() && chdir(cwd.c_str()) != 0) _exit(127);
  if (stdin_fd >= 0) {
    dup2(stdin_fd, STDIN_FILENO);
  } else {
    int devnull = open("/dev/null", O_RDONLY);
    if (devnull >= 0) dup2(devnull, STDIN_FILENO);
  }
  if (stdout_fd >= 0) {
    dup2(stdout_fd, STDOUT_FILENO);
    dup2(stdout_fd, STDERR_FILENO);
  } else {
    int devnull = open("/dev/null", O_WRONLY);
    if (devnull >= 0) {
      dup2(devnull, STDOUT_FILENO);
      dup2(devnull, STDERR_FILENO);
    }
  }
  for (const auto& [k, v] : env) setenv(k.c_str(), v.c_str(), 1);
  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  execvp(cargv[0], cargv.data());
  _exit(127);
}

}  // namespace

RunResult run_process(const std::vector<std::string>& argv,
                      const RunOptions& opts) {
  RunResult res;
  if (argv.empty()) {
    res.diagnostic = "empty argv";
    return res;
  }

  int in_pipe[2] = {-1, -1};
  int out_pipe[2] = {-1, -1};
  if (opts.stdin_data && pipe(in_pipe) != 0) {
    res.diagnostic = std::strerror(errno);
    return res;
  }
  if (opts.capture_output && pipe(out_pipe) != 0) {
    res.diagnostic = std::strerror(errno);
    return res;
  }

  auto t0 = Clock::now();
  pid_t pid = fork();
  if (pid < 0) {
    res.diagnostic = std::strerror(errno);
    return res;
  }
  if (pid == 0) {
    if (in_pipe[1] >= 0) close(in_pipe[1]);
    if (out_pipe[0] >= 0) close(out_pipe[0]);
    child_exec(argv, opts.env, opts.cwd, in_pipe[0], out_pipe[1]);
  }

  if (in_pipe[0] >= 0) close(in_pipe[0]);
  if (out_pipe[1] >= 0) close(out_pipe[1]);

  // Feed stdin, ignoring EPIPE if the child exits early.
  if (in_pipe[1] >= 0) {
    signal(SIGPIPE, SIG_IGN);
    const auto& data = *opts.stdin_data;
    size_t off = 0;
    while (off < data.size()) {
      ssize_t n = write(in_pipe[1], data.data() + off, data.size() - off);
      if (n <= 0) break;
      off += static_cast<size_t>(n);
    }
    close(in_pipe[1]);
  }

  std::string output;
  bool timed_out = false;
  int status = 0;
  bool reaped = false;
  char buf[4096];

  while (!reaped) {
    if (out_pipe[0] >= 0) {
      struct pollfd pfd = {out_pipe[0], POLLIN, 0};
      int pr = poll(&pfd, 1, 20);
      if (pr > 0 && (pfd.revents & (POLLIN | POLLHUP))) {
        ssize_t n = read(out_pipe[0], buf, sizeof(buf));
        if (n > 0) output.append(buf, static_cast<size_t>(n));
        if (n == 0) {
          close(out_pipe[0]);
          out_pipe[0] = -1;
        }
      }
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    pid_t w = waitpid(pid, &status, WNOHANG);
    if (w == pid) {
      reaped = true;
      break;
    }
    if (opts.timeout_ms >= 0 && ms_since(t0) >= opts.timeout_ms) {
      timed_out = true;
      kill(-pid, SIGKILL);
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      reaped = true;
    }
  }
  // Drain whatever is left in the output pipe.
  if (out_pipe[0] >= 0) {
    ssize_t n;
    while ((n = read(out_pipe[0], buf, sizeof(buf))) > 0)
      output.append(buf, static_cast<size_t>(n));
    close(out_pipe[0]);
  }

  res.wall_time_ms = ms_since(t0);
  res.output = std::move(output);
  if (timed_out) {
    res.kind = RunResult::Kind::TIMED_OUT;
  } else if (WIFSIGNALED(status)) {
    res.kind = RunResult::Kind::SIGNALED;
    res.signal = WTERMSIG(status);
  } else {
    res.kind = RunResult::Kind::EXITED;
    res.exit_code = WEXITSTATUS(status);
    if (res.exit_code == 127) {
      res.kind = RunResult::Kind::SPAWN_ERROR;
      res.diagnostic = "exec failed: " + argv[0];
    }
  }
  return res;
}

ChildProcess::~ChildProcess() {
  if (pid_ > 0 && !exited_) {
    kill_now();
    reap(true);
  }
}

bool ChildProcess::start(const std::vector<std::string>& argv,
                         const std::map<std::string, std::string>& env,
                         const std::string& cwd) {
  if (argv.empty()) {
    diagnostic_ = "empty argv";
    return false;
  }
  pid_t pid = fork();
  if (pid < 0) {
    diagnostic_ = std::strerror(errno);
    return false;
  }
  if (pid == 0) child_exec(argv, env, cwd, -1, -1);
  pid_ = pid;
  // Give exec a moment to fail so immediate spawn errors surface here.
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  reap(false);
  if (exited_ && !signaled_ && exit_code_ == 127) {
    diagnostic_ = "exec failed: " + argv[0];
    return false;
  }
  return true;
}

void ChildProcess::reap(bool block) {
  if (pid_ <= 0 || exited_) return;
  int status = 0;
  pid_t w = waitpid(pid_, &status, block ? 0 : WNOHANG);
  if (w == pid_) {
    exited_ = true;
    if (WIFSIGNALED(status)) {
      signaled_ = true;
      signal_ = WTERMSIG(status);
    } else {
      exit_code_ = WEXITSTATUS(status);
    }
  }
}

bool ChildProcess::alive() {
  reap(false);
  return pid_ > 0 && !exited_;
}

void ChildProcess::terminate() {
  if (pid_ > 0 && !exited_) {
    kill(-pid_, SIGTERM);
    kill(pid_, SIGTERM);
  }
}

void ChildProcess::kill_now() {
  if (pid_ > 0 && !exited_) {
    kill(-pid_, SIGKILL);
    kill(pid_, SIGKILL);
    reap(true);
  }
}

}  // namespace fuzzkit
