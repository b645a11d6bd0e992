#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace llmpoet {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over raw bytes; used for stream naming and content hashes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Derives an independent seed for a named stream. All randomness in a run
/// flows from one master seed through these streams, so any sub-computation
/// can be replayed without carrying engine state around.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t index = 0, std::uint64_t sub = 0);

inline Rng make_rng(std::uint64_t master, std::string_view stream,
                    std::uint64_t index = 0, std::uint64_t sub = 0) {
  return Rng(derive_seed(master, stream, index, sub));
}

// Distributions are constructed per call so that the engine is the only
// piece of random state (normal_distribution caches a second variate).
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace llmpoet
