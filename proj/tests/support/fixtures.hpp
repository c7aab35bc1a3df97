#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

inline std::filesystem::path dir() { return RWSCOPE_FIXTURE_DIR; }
inline std::filesystem::path stub(const std::string& name) { return std::filesystem::path(RWSCOPE_STUB_DIR) / name; }

// hello_<cc>_<pie|nopie>[_stripped] for every compiler the build found.
inline std::vector<std::filesystem::path> hello_variants() {
  std::vector<std::filesystem::path> out;
  for (const char* cc : {"gcc", "clang"}) {
    for (const char* reloc : {"pie", "nopie"}) {
      for (const char* suffix : {"", "_stripped"}) {
        const auto p = dir() / (std::string("hello_") + cc + "_" + reloc + suffix);
        if (std::filesystem::exists(p)) out.push_back(p);
      }
    }
  }
  return out;
}

}  // namespace fixtures
