#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace lodmsq {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of a run seeded with `seed`.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

inline void fill_gaussian(Rng& rng, std::span<float> out, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& v : out) v = static_cast<float>(n(rng));
}

}  // namespace lodmsq
