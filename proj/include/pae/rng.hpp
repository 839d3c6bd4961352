#pragma once

#include <cstdint>
#include <random>

namespace pae {

// splitmix64 mix step; used to derive independent child seeds from a root
// seed so that per-transient / per-batch streams do not overlap.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded stream all randomness in the project flows through. Wraps mt19937_64
// so distributions are deterministic for a given seed on a given platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double std = 1.0) {
    return std::normal_distribution<double>(mean, std)(engine_);
  }

  // Normal truncated to +-2 std, resampled.
  double trunc_normal(double std) {
    for (;;) {
      double v = normal(0.0, std);
      if (v >= -2.0 * std && v <= 2.0 * std) return v;
    }
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pae
