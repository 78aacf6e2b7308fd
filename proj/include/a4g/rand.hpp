#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace a4g {

using Rng = std::mt19937_64;

/// Independent stream derived from a base seed, so that unrelated consumers
/// (dataset, init, batches, samplers) never share RNG state.
inline Rng make_rng(uint64_t seed, uint64_t stream = 0) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline void fill_normal(Rng& rng, std::span<double> out, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : out) v = dist(rng);
}

inline void fill_uniform(Rng& rng, std::span<double> out, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : out) v = dist(rng);
}

/// Normal(mean, stddev) resampled into [mean - 2*stddev, mean + 2*stddev].
inline void fill_truncated_normal(Rng& rng, std::span<double> out, double mean = 0.0,
                                  double stddev = 0.02) {
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : out) {
    double x = dist(rng);
    while (std::abs(x - mean) > 2.0 * stddev) x = dist(rng);
    v = x;
  }
}

}  // namespace a4g
