#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rwscope {

enum class Rounding { HalfUp, Truncate };

// Two-decimal rounding of a non-negative percentage. The epsilon absorbs
// binary representation error (49.999999999 -> 50.00 under truncation).
inline double round2(double value, Rounding mode) {
  constexpr double kEps = 1e-9;
  const double scaled = value * 100.0;
  const double r = mode == Rounding::HalfUp ? std::floor(scaled + 0.5 + kEps) : std::floor(scaled + kEps);
  return r / 100.0;
}

inline std::string format_percent(double value, Rounding mode) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f%%", round2(value, mode));
  return buf;
}

inline std::string format_fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

inline Rounding parse_rounding(std::string_view s) {
  if (s == "truncate") return Rounding::Truncate;
  if (s == "half-up") return Rounding::HalfUp;
  throw std::invalid_argument("rounding must be 'truncate' or 'half-up'");
}

}  // namespace rwscope
