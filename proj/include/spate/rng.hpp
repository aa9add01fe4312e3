#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace spate {

/// SplitMix64 (Steele, Lea & Flood). Chosen for its tiny, fully specified
/// state update so that streams can be reproduced bit-for-bit elsewhere:
///   state += 0x9E3779B97F4A7C15
///   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) from the top 53 bits.
  constexpr double next_double() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform in (0, 1): never returns 0, so it is safe under log().
  constexpr double next_open_double() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * next_double();
  }

  /// Uniform integer in [0, bound) by plain modulo reduction.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    return next() % bound;
  }

 private:
  std::uint64_t state_;
};

/// Seed for the index-th independent sub-stream of `seed`: the first output of
/// SplitMix64 seeded with seed + index.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return SplitMix64(seed + index).next();
}

/// Standard normal variates by Box-Muller. Each pair consumes two raw draws
/// (u1 open, u2 half-open): r = sqrt(-2 ln u1), the cosine branch is returned
/// first and the sine branch on the following call.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) noexcept : rng_(seed) {}

  double next() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = rng_.next_open_double();
    const double u2 = rng_.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  SplitMix64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace spate
