#pragma once

// Seed derivation and parameter initialisation. Every random stream in the
// library is a std::mt19937_64 seeded from (master seed, stream, index) so
// results do not depend on scheduling order.

#include <cmath>
#include <cstdint>
#include <random>

#include "egc2/graph.hpp"

namespace egc2 {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t { Init = 1, Shuffle = 2, Folds = 3, Synth = 4, Attack = 5 };

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(master) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

using Rng = std::mt19937_64;

// Uniform in [0, 1) with a fixed mapping from engine output (the standard
// distributions are implementation-defined).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  // Lemire-free rejection keeps the mapping portable.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) std::swap(first[i], first[uniform_below(rng, static_cast<std::uint64_t>(i + 1))]);
}

// Glorot uniform: U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
inline Matrix xavier_uniform(int fan_in, int fan_out, Rng& rng) {
  const double b = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = (2.0 * uniform01(rng) - 1.0) * b;
  return w;
}

}  // namespace egc2
