#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace memsim {

/// The single random engine type used throughout. Every stochastic operation
/// takes one of these by reference; nothing seeds from the wall clock.
using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Child seed for a stable task identifier. Substreams derived this way make
/// results independent of how tasks are scheduled across threads.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t task_id) {
  return mix64(mix64(parent) ^ mix64(task_id + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view task) {
  return derive_seed(parent, fnv1a64(task));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline Rng make_rng(std::uint64_t parent, std::string_view task) {
  return Rng(derive_seed(parent, task));
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace memsim
