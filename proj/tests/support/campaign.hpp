#pragma once

// Stub campaigns: manifests over the hello fixtures and adapters backed by
// the shell scripts in tests/stubs.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "support/fixtures.hpp"

namespace campaign {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("rwscope-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline nlohmann::json entry(const std::string& id, const std::filesystem::path& path, const std::string& compiler,
                            const std::string& relocation, const std::string& symbols) {
  return {{"id", id},           {"path", path.string()},   {"program", "hello"}, {"compiler", compiler},
          {"flags", "O2"},      {"relocation", relocation}, {"symbols", symbols}, {"os", "linux"}};
}

// Two binaries: gcc PIE with symbols and gcc non-PIE stripped.
inline nlohmann::json two_binary_manifest() {
  return nlohmann::json::array({entry("gcc-pie", fixtures::dir() / "hello_gcc_pie", "gcc", "pie", "present"),
                                entry("gcc-nopie-s", fixtures::dir() / "hello_gcc_nopie_stripped", "gcc", "nopie",
                                      "stripped")});
}

inline std::string stub_cmd(const std::string& script, const std::string& args) {
  return "'" + fixtures::stub(script).string() + "' " + args;
}

inline nlohmann::json adapter(const std::string& tool, const std::string& script, bool afl = true) {
  nlohmann::json a{{"tool", tool}, {"emits_ir", false}, {"nop_command", stub_cmd(script, "{input} {output}")}};
  if (afl) a["afl_command"] = stub_cmd(script, "{input} {output}");
  return a;
}

// "copier" always works, "breaker" never produces output.
inline nlohmann::json two_adapters() {
  return nlohmann::json::array({adapter("copier", "copy_tool.sh"), adapter("breaker", "fail_tool.sh")});
}

inline void write(const std::filesystem::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace campaign
