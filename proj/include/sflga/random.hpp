#pragma once

#include <cstdint>
#include <random>

namespace sflga {

// Purposes that get their own random stream. A stream is derived from the
// master seed, the purpose, and a counter (round, episode, client...), so
// enabling one feature never shifts the draws seen by another.
enum class Stream : std::uint64_t {
  Init = 1,
  Data = 2,
  Partition = 3,
  Batches = 4,
  Channel = 5,
  Distance = 6,
  Explore = 7,
  Replay = 8,
  Calibration = 9,
  Policy = 10,
  Theory = 11,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::uint64_t counter = 0) {
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
  return splitmix64(s ^ splitmix64(counter));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, Stream stream,
                    std::uint64_t counter = 0) {
  return Rng(derive_seed(master, stream, counter));
}

// Uniform double in [0, 1) built from the top 53 bits; unlike
// std::uniform_real_distribution the result is fixed across standard
// library implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n));
}

}  // namespace sflga
