#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cmt {

/// Engine used for every random draw. MT19937-64 output is fully specified by
/// the C++ standard, so seeded streams are identical across platforms.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30U)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27U)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31U);
}

/// Derives an independent stream seed from a base seed and a path of stream ids,
/// e.g. derive_seed(seed, {kBufferStream, step}).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(base);
  for (const auto id : path) {
    h = splitmix64(h ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng{splitmix64(seed)}; }

}  // namespace cmt
