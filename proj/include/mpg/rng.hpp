#pragma once

#include <cstdint>
#include <random>

namespace mpg {

// splitmix64 mixer, used to derive independent seeds from a root seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Worker kinds for stream derivation. Every worker gets its own stream keyed
// by (root seed, kind, index) so that thread scheduling never changes the
// random numbers a given worker sees.
enum class StreamKind : std::uint64_t {
  kInit = 1,
  kActor = 2,
  kBuffer = 3,
  kLearner = 4,
  kEval = 5,
  kEnv = 6,
  kDiagnostic = 7,
};

inline std::mt19937_64 derive_stream(std::uint64_t root, StreamKind kind,
                                     std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(root);
  s = splitmix64(s ^ (static_cast<std::uint64_t>(kind) << 32));
  s = splitmix64(s ^ index);
  return std::mt19937_64(s);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(std::mt19937_64& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace mpg
