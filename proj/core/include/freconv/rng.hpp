#pragma once

#include <cmath>
#include <cstdint>

#include "freconv/errors.hpp"

namespace freconv {

// Deterministic 64-bit generator (splitmix64). The platform engines in
// <random> are not pinned by the standard, so seeds would not be portable;
// this one is a fixed algorithm over fixed-width integers. Single owner,
// not shareable between threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) {
    if (!(a < b)) throw ParamError("uniform(a,b) requires a < b");
    return a + (b - a) * uniform01();
  }

  // Box-Muller. Two uniforms consumed per call; the second output is
  // discarded so the call sequence maps one-to-one onto the raw stream.
  double normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw ParamError("normal(mu,sigma) requires sigma > 0");
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace freconv
