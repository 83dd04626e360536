/// Seeded randomness helpers shared by the solver and the experiment
/// drivers. Every random stream in the toolkit is derived from a user
/// seed through derive_seed so that runs are reproducible bit for bit.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace qpt {

using BinaryAssignment = std::vector<std::uint8_t>;

namespace rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// splitmix64 finalizer; also used to whiten derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic sub-stream derivation: stream s of seed q is
/// splitmix64(q ^ (s+1)*golden). Documented so reports can be replayed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ ((stream + 1) * kGolden));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(splitmix64(seed));
}

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 0.5]; used by the stage-two penalty adjustment.
inline double uniform_half_open_top(std::mt19937_64& gen) {
  return (1.0 - uniform01(gen)) * 0.5;
}

/// Independent fair bits, one assignment of length num_vars.
inline BinaryAssignment random_assignment(std::size_t num_vars,
                                          std::mt19937_64& gen) {
  BinaryAssignment bits(num_vars);
  std::uint64_t word = 0;
  int left = 0;
  for (std::size_t i = 0; i < num_vars; ++i) {
    if (left == 0) {
      word = gen();
      left = 64;
    }
    bits[i] = static_cast<std::uint8_t>(word & 1u);
    word >>= 1;
    --left;
  }
  return bits;
}

}  // namespace rng
}  // namespace qpt
