#include "diffeeg/schedule.hpp"

#include <stdexcept>
#include <string>

namespace diffeeg {

Schedule Schedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule needs at least one step");
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("schedule beta must lie in (0, 1), got " + std::to_string(b));
    }
  }
  Schedule s;
  s.betas_ = std::move(betas);
  const std::size_t n = s.betas_.size();
  s.alphas_.resize(n);
  s.alpha_bars_.resize(n);
  s.beta_tildes_.resize(n);
  double prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.alphas_[i] = 1.0 - s.betas_[i];
    prod *= s.alphas_[i];
    s.alpha_bars_[i] = prod;
    s.beta_tildes_[i] = i == 0 ? s.betas_[0]
                               : (1.0 - s.alpha_bars_[i - 1]) / (1.0 - s.alpha_bars_[i]) * s.betas_[i];
  }
  return s;
}

std::size_t Schedule::index(int t) const {
  if (t < 1 || t > steps()) {
    throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " +
                            std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t - 1);
}

Schedule linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("schedule steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("schedule requires 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return Schedule::from_betas(std::move(betas));
}

}  // namespace diffeeg
