#pragma once

#include <cstdint>
#include <vector>

#include "diffeeg/autodiff.hpp"

namespace diffeeg {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation with bias correction, no weight decay.
class Adam {
 public:
  Adam() = default;
  Adam(const ad::NamedParams& params, AdamOptions opts);

  // Applies one update from the parameters' current gradients.
  void step(const ad::NamedParams& params);

  const AdamOptions& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }
  std::uint64_t steps() const { return t_; }

  // Moments exposed for checkpointing; one entry per parameter, same order.
  std::vector<ad::Tensor>& first_moments() { return m_; }
  std::vector<ad::Tensor>& second_moments() { return v_; }
  const std::vector<ad::Tensor>& first_moments() const { return m_; }
  const std::vector<ad::Tensor>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamOptions opts_;
  std::vector<ad::Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace diffeeg
