#pragma once

// Seeded random source. All randomness in the library flows through Rng so a
// single integer seed reproduces a whole run.

#include <cstdint>
#include <random>
#include <vector>

#include "dlk/tensor.hpp"

namespace dlk {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream; the same (seed, stream) pair always yields the same child.
  Rng split(std::uint64_t stream) const;

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);
  Vector normal_vector(std::size_t len, double stddev = 1.0);
  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);
  Tensor4 normal_tensor(Tensor4::Dims dims, double stddev = 1.0);

  /// Random permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dlk
