#pragma once

#include <cstdint>
#include <random>

namespace spinrally {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent stream seeds.
inline constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stream tags so that different consumers of one run seed never share draws.
enum class Stream : std::uint64_t { train_env = 1, generator = 2, eval = 3, candidate = 4, policy = 5, init = 6, replay = 7 };

inline Rng make_rng(std::uint64_t run_seed, Stream stream, std::uint64_t index = 0) {
  return Rng(mix_seed(mix_seed(run_seed, static_cast<std::uint64_t>(stream)), index));
}

inline double uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace spinrally
