#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sot {

// Error hierarchy. Everything the library throws derives from Error so the
// CLI can map library failures to exit code 1 and validation to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layer chain or architecture assembly problems.
class BuildError : public Error {
 public:
  using Error::Error;
};

// Input shapes that do not match what a function expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong order (e.g. backward without a train-mode
// forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered while training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// File parsing / serialization failures; messages carry byte offsets where
// that makes sense.
class IoError : public Error {
 public:
  using Error::Error;
};

// Integer box queries outside the grid.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling exhausted its attempt budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Configuration document validation failures.
class ConfigError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// splitmix64; used to derive independent seed streams from one user seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic sub-stream `stream` of `seed`.
inline Rng seeded_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t s = seed ^ (0xa0761d6478bd642fULL * (stream + 1));
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

inline float uniform_real(Rng& rng, float lo, float hi) {
  return std::uniform_real_distribution<float>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace sot
