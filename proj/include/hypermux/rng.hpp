#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace hypermux {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic child seed for a (parent, stream) pair.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return splitmix64(splitmix64(parent) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [lo, hi].
inline long long uniform_int(Rng& rng, long long lo, long long hi) {
  std::uniform_int_distribution<long long> dist(lo, hi);
  return dist(rng);
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(i - 1)));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace hypermux
