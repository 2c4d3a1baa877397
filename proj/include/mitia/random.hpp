#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mitia {

using Rng = std::mt19937_64;

// splitmix64 finalizer; mixes a base seed with stream identifiers so that
// every (seed, subject, slice, ...) tuple gets an independent generator.
inline uint64_t mix_seed(uint64_t value) {
  value += 0x9E3779B97F4A7C15ULL;
  value = (value ^ (value >> 30U)) * 0xBF58476D1CE4E5B9ULL;
  value = (value ^ (value >> 27U)) * 0x94D049BB133111EBULL;
  return value ^ (value >> 31U);
}

inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> streams) {
  uint64_t state = mix_seed(seed);
  for (uint64_t s : streams) state = mix_seed(state ^ mix_seed(s + 1));
  return state;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

}  // namespace mitia
