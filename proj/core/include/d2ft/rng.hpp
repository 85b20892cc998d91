// Copyright (c) 2026 The d2ft authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random helpers. std::mt19937_64 is fully specified by the
// standard; the distributions in <random> are not, so the draws below are
// hand-rolled to keep outputs byte-identical across platforms and compilers.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace d2ft {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stream-seeded generator: independent streams for (seed, stream) pairs.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(stream)));
}

/// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) via rejection sampling (exactly uniform).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Standard normal draw (Box-Muller, one value per call; the sibling draw is
/// discarded so consumption per call is fixed).
inline double gaussian(std::mt19937_64& rng) {
  double u1 = uniform_double(rng);
  double u2 = uniform_double(rng);
  while (u1 <= 0.0) u1 = uniform_double(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// In-place Fisher-Yates shuffle using uniform_below.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace d2ft
