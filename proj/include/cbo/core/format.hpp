#pragma once

#include <cstdio>
#include <string>

namespace cbo {

/// Round-trip decimal form of a double; identical bits give identical text.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace cbo
