#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dlab/matrix.hpp"

namespace dlab {

// xoshiro256** (Blackman & Vigna), state seeded from a 64-bit seed through
// splitmix64. Normal deviates use the Box-Muller transform on two uniforms
// with 53-bit mantissas, so streams are identical on every IEEE-754 platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  double normal();

  Matrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0);
  std::vector<std::size_t> permutation(std::size_t n);

  // Independent child stream derived from this generator's seed and a tag.
  Rng fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace dlab
