#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace fracdiff::io {

// Fixed numeric formatting for every CSV cell: enough digits to be useful,
// few enough to be stable, and no locale dependence. Re-running an experiment
// with the same config must produce byte-identical files.
inline std::string fmt_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

// Round-trip-exact formatting for cache files.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// FNV-1a 64-bit hash; used to derive deterministic output subdirectories from
// the resolved experiment configuration.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return std::string(buf);
}

}  // namespace fracdiff::io
