#pragma once

#include <cmath>
#include <cstdint>

namespace uavrelay {

// Deterministic 64-bit PRNG (SplitMix64 finalizer over a Weyl sequence).
// Distributions are hand-rolled because the <random> distribution templates
// are implementation-defined and would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); rejection sampling avoids modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double next_gaussian() {
    double u1;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.28318530717958647692528676655900577 * u2);
  }

  // Independent child stream. Callers must use distinct salts; forking does
  // not advance this stream.
  Rng fork(std::uint64_t salt) const {
    return Rng(state_ ^ (0xd1342543de82ef95ull * (salt + 0x632be59bd9b4e019ull)));
  }

 private:
  std::uint64_t state_;
};

}  // namespace uavrelay
