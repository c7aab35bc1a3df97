#include "rwscope/process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "rwscope/errors.hpp"

extern char** environ;

namespace rwscope::process {
namespace {

class SpawnActions {
 public:
  SpawnActions() {
    posix_spawn_file_actions_init(&actions_);
    posix_spawnattr_init(&attr_);
  }
  ~SpawnActions() {
    posix_spawn_file_actions_destroy(&actions_);
    posix_spawnattr_destroy(&attr_);
  }
  SpawnActions(const SpawnActions&) = delete;
  SpawnActions& operator=(const SpawnActions&) = delete;

  posix_spawn_file_actions_t* actions() { return &actions_; }
  posix_spawnattr_t* attr() { return &attr_; }

 private:
  posix_spawn_file_actions_t actions_;
  posix_spawnattr_t attr_;
};

std::string output_path(const std::filesystem::path& p) { return p.empty() ? "/dev/null" : p.string(); }

}  // namespace

ProcessResult run(const std::vector<std::string>& argv, const SpawnOptions& opts) {
  if (argv.empty()) throw SpawnError("empty command");

  SpawnActions sa;
  posix_spawnattr_setflags(sa.attr(), POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(sa.attr(), 0);
  const std::string cwd = opts.cwd.string();
  if (!cwd.empty()) posix_spawn_file_actions_addchdir_np(sa.actions(), cwd.c_str());
  const std::string out = output_path(opts.stdout_to);
  const std::string err = output_path(opts.stderr_to);
  posix_spawn_file_actions_addopen(sa.actions(), STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(sa.actions(), STDOUT_FILENO, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(sa.actions(), STDERR_FILENO, err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);

  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  const auto start = std::chrono::steady_clock::now();
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, cargv[0], sa.actions(), sa.attr(), cargv.data(), environ);
  if (rc != 0) throw SpawnError("cannot run '" + argv[0] + "': " + std::strerror(rc));

  ProcessResult result;
  int status = 0;
  rusage usage{};
  auto delay = std::chrono::microseconds(500);
  for (;;) {
    // Peek without reaping so the process group id stays reserved until we
    // have signalled any stragglers left in the tree.
    siginfo_t info{};
    const int w = waitid(P_PID, static_cast<id_t>(pid), &info, WEXITED | WNOHANG | WNOWAIT);
    if (w == 0 && info.si_pid == pid) break;
    if (w < 0 && errno != EINTR) throw SpawnError(std::string("waitid failed: ") + std::strerror(errno));
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (opts.timeout_seconds > 0 && elapsed >= opts.timeout_seconds) {
      result.timed_out = true;
      break;
    }
    std::this_thread::sleep_for(delay);
    delay = std::min(delay * 2, std::chrono::microseconds(20000));
  }
  kill(-pid, SIGKILL);
  while (wait4(pid, &status, 0, &usage) < 0 && errno == EINTR) {
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.term_signal = WTERMSIG(status);
  }
  result.max_rss_kb = usage.ru_maxrss;
  return result;
}

std::vector<std::string> expand_command(std::string_view command_template,
                                        const std::map<std::string, std::string>& placeholders) {
  std::vector<std::string> words;
  std::string cur;
  bool in_word = false;
  char quote = 0;
  for (const char c : command_template) {
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        cur.push_back(c);
      }
    } else if (c == '\'' || c == '"') {
      quote = c;
      in_word = true;
    } else if (c == ' ' || c == '\t' || c == '\n') {
      if (in_word) words.push_back(std::move(cur));
      cur.clear();
      in_word = false;
    } else {
      cur.push_back(c);
      in_word = true;
    }
  }
  if (quote) throw std::invalid_argument("unterminated quote in command template");
  if (in_word) words.push_back(std::move(cur));

  for (auto& w : words) {
    for (const auto& [name, value] : placeholders) {
      const std::string key = "{" + name + "}";
      for (auto pos = w.find(key); pos != std::string::npos; pos = w.find(key, pos + value.size())) {
        w.replace(pos, key.size(), value);
      }
    }
  }
  return words;
}

}  // namespace rwscope::process
