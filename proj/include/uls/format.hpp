#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace uls {

// Shortest round-trip decimal form; identical bytes for identical doubles.
inline std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace uls
