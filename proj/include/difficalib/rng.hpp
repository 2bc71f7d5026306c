#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace difficalib::rng {

// Counter-based generator: every draw is a pure function of
// (seed, stream, key, counter), so per-sample randomness does not depend on
// iteration order or thread scheduling.

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t stream,
                             std::uint64_t key, std::uint64_t counter) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ stream);
  h = mix64(h ^ key);
  return mix64(h ^ counter);
}

/// Uniform in [0, 1) with 53 random bits.
inline double uniform(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t key, std::uint64_t counter) {
  return static_cast<double>(hash(seed, stream, key, counter) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller; consumes counters 2*counter and 2*counter+1.
inline double normal(std::uint64_t seed, std::uint64_t stream,
                     std::uint64_t key, std::uint64_t counter) {
  const double u1 = 1.0 - uniform(seed, stream, key, 2 * counter);  // (0, 1]
  const double u2 = uniform(seed, stream, key, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform integer in [0, n) by rejection-free multiply-shift (bias < 2^-64 * n).
inline std::uint64_t below(std::uint64_t n, std::uint64_t seed,
                           std::uint64_t stream, std::uint64_t key,
                           std::uint64_t counter) {
  const unsigned __int128 product =
      static_cast<unsigned __int128>(hash(seed, stream, key, counter)) * n;
  return static_cast<std::uint64_t>(product >> 64);
}

/// Sequential stream for loops that are inherently serial (shuffles,
/// k-means++ seeding). Same construction, counter advances per draw.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  double uniform() { return rng::uniform(seed_, stream_, 0, counter_++); }
  std::uint64_t below(std::uint64_t n) { return rng::below(n, seed_, stream_, 0, counter_++); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace difficalib::rng
