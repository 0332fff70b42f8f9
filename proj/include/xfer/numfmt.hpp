#pragma once

#include <cstdio>
#include <string>

namespace xfer {

// Canonical float formatting for artifacts: 9 significant digits, %g form.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace xfer
