#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dosebandit {

// Deterministic draw helpers on top of std::mt19937_64.
//
// The engine's output sequence is pinned by the standard, but std::shuffle,
// std::uniform_*_distribution and std::normal_distribution are not: their
// results differ across standard libraries. Every sampling decision in this
// project goes through this wrapper, so a (config, seed) pair reproduces the
// same draws regardless of thread count or standard library (remaining
// cross-platform variation is limited to libm rounding).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform index in [0, n). Rejection sampling, no modulo bias.
  std::size_t next_index(std::size_t n) {
    const std::uint64_t m = static_cast<std::uint64_t>(n);
    const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % m + 1) % m;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
    std::uint64_t x = engine_();
    while (x > limit) x = engine_();
    return static_cast<std::size_t>(x % m);
  }

  // Standard normal via Box-Muller; generates pairs, caches the spare.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1], log-safe
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Fisher-Yates over [first, last).
  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = next_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent sub-seed for a named stream (split, per-demo logging, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream));
}

}  // namespace dosebandit
