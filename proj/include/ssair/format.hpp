#pragma once

#include <charconv>
#include <string>

namespace ssair {

/// Shortest round-trip decimal form; always carries a '.', exponent, or is a
/// special value, so it re-parses as a float literal.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEni") == std::string::npos) s += ".0";
  return s;
}

}  // namespace ssair
