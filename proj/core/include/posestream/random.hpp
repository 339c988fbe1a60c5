#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace posestream {

/// Seeded random source with platform-independent draws.
///
/// std::uniform_real_distribution and std::normal_distribution are
/// implementation-defined, so the conversions from raw 64-bit words are done
/// here. Only the mt19937_64 engine (fully specified by the standard) is used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Derives an independent stream from a base seed and a list of salts.
  template <typename... Salts>
  static Rng derive(std::uint64_t seed, Salts... salts) {
    std::uint64_t h = mix(seed);
    ((h = mix(h ^ static_cast<std::uint64_t>(salts))), ...);
    return Rng(h);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} / n) * n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second value, so the stream
  /// position depends only on the number of calls).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace posestream
