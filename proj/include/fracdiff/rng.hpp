#pragma once

#include <cstdint>
#include <random>

namespace fracdiff {

// Named, seedable, portable uniform generator.
//
// std::mt19937_64 has a fully pinned specification (identical output streams
// on every conforming implementation), but std::uniform_real_distribution is
// implementation-defined, so the 64->double mapping is done by hand: the top
// 53 bits scaled by 2^-53 give a uniform draw in [0,1) that is bit-identical
// on any IEEE-754 platform.
class PortableRng {
 public:
  explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fracdiff
