#pragma once

// Child-process execution with wall-clock timeouts and peak-RSS accounting.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rwscope::process {

struct ProcessResult {
  std::optional<int> exit_code;    // set when the child exited normally
  std::optional<int> term_signal;  // set when the child was killed by a signal
  bool timed_out = false;
  double wall_seconds = 0.0;
  long max_rss_kb = 0;  // peak resident set of the child and its reaped descendants

  bool exited_normally() const { return exit_code.has_value() && !timed_out; }
};

struct SpawnOptions {
  std::filesystem::path cwd;        // empty: inherit
  std::filesystem::path stdout_to;  // empty: /dev/null
  std::filesystem::path stderr_to;  // empty: /dev/null
  double timeout_seconds = 0;       // <= 0: no limit
};

/// Runs argv[0] (PATH lookup applies) in its own process group and waits.
///
/// On timeout the whole process group is sent SIGKILL. Throws SpawnError when
/// the program cannot be started (not found, not executable, bad cwd).
ProcessResult run(const std::vector<std::string>& argv, const SpawnOptions& opts = {});

// Splits a command template on whitespace (single and double quotes group
// words), then replaces "{name}" placeholders inside each word.
std::vector<std::string> expand_command(std::string_view command_template,
                                        const std::map<std::string, std::string>& placeholders);

}  // namespace rwscope::process
