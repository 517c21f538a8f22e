#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace rbc {

using Rng = std::mt19937_64;

/// Engine seeded from a root seed plus stream coordinates, so every consumer
/// (batch sampler, per-sample augmentation, init) gets a reproducible stream
/// that does not depend on how many draws other consumers made.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq full(words.begin(), words.end());
  return Rng(full);
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Normal(0, stddev²) truncated to [-2·stddev, 2·stddev] by rejection.
inline double truncated_normal(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    const double v = dist(rng);
    if (v >= -2.0 * stddev && v <= 2.0 * stddev) return v;
  }
}

}  // namespace rbc
