#pragma once

// RFC 4180-style CSV helpers (quoted fields, doubled quotes; no embedded newlines).

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rwscope::csv {

std::vector<std::string> split_line(std::string_view line);
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Reads all non-empty lines; trailing '\r' is dropped.
std::vector<std::vector<std::string>> read_all(std::istream& in);

}  // namespace rwscope::csv
