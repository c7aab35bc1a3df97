#pragma once

// Reference feature extraction from `readelf -hlSW` text output.

#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

namespace oracle {

struct ReadelfView {
  std::string type;  // "EXEC", "DYN", ...
  bool has_interp = false;
  std::set<std::string> raw_sections;  // names as printed, NULL entry excluded
  std::set<std::string> features;      // canonical names plus pi / strip when true
};

inline std::string run_capture(const std::string& cmd) {
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed: " + cmd);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  if (::pclose(p) != 0) throw std::runtime_error("command failed: " + cmd);
  return out;
}

inline std::string canonical(std::string s) {
  std::size_t i = 0;
  while (i < s.size() && s[i] == '.') ++i;
  s.erase(0, i);
  for (auto& c : s) {
    if (c == '-') c = '_';
    else c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

inline ReadelfView readelf(const std::string& path) {
  const std::string text = run_capture("readelf -hlSW '" + path + "' 2>/dev/null");
  ReadelfView v;
  std::istringstream in(text);
  std::string line;
  bool in_sections = false;
  while (std::getline(in, line)) {
    if (line.find("Type:") != std::string::npos && v.type.empty()) {
      std::istringstream ls(line.substr(line.find("Type:") + 5));
      ls >> v.type;
    }
    if (line.find("Requesting program interpreter") != std::string::npos) v.has_interp = true;
    if (line.rfind("Section Headers:", 0) == 0) {
      in_sections = true;
      continue;
    }
    if (in_sections) {
      if (line.rfind("Key to Flags", 0) == 0 || line.empty()) {
        in_sections = false;
        continue;
      }
      const auto lb = line.find('[');
      const auto rb = line.find(']');
      if (lb == std::string::npos || rb == std::string::npos) continue;
      const std::string idx = line.substr(lb + 1, rb - lb - 1);
      if (idx.find("Nr") != std::string::npos) continue;
      if (std::stoi(idx) == 0) continue;
      std::istringstream ls(line.substr(rb + 1));
      std::string name;
      ls >> name;
      v.raw_sections.insert(name);
    }
  }
  if (v.raw_sections.count(".interp")) v.has_interp = true;
  for (const auto& s : v.raw_sections) v.features.insert(canonical(s));
  if (v.type == "DYN") v.features.insert("pi");
  if (!v.raw_sections.count(".symtab")) v.features.insert("strip");
  return v;
}

}  // namespace oracle
