#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "diffeeg/tensor.hpp"

namespace diffeeg {

// Seedable generator with named, independent sub-streams: split() derives
// a child seed from (seed, name, index) without touching this stream's state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::string_view name, std::uint64_t index = 0) const;

  double normal();
  double uniform();  // [0, 1)
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  ad::Tensor normal_tensor(const ad::Shape& shape);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view name, std::uint64_t index);

}  // namespace diffeeg
