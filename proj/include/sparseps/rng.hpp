#pragma once

#include <cstdint>
#include <random>

namespace sparseps {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective mixer on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives the seed of an independent substream from a master seed and a
/// path of counters (e.g. replication index, method tag). Identical paths
/// always give identical streams; no state is shared between streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(master) ^ a) + b);
}

inline Rng substream(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(derive_seed(master, a, b));
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline bool bernoulli(Rng& rng, double prob) { return uniform01(rng) < prob; }

}  // namespace sparseps
