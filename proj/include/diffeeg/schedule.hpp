#pragma once

#include <cstddef>
#include <vector>

namespace diffeeg {

struct ScheduleConfig {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.05;
};

// Variance schedule beta_1..beta_T and the constants derived from it.
// Steps are 1-based (t = 1..T) at the interface; storage is 0-based, so
// beta(t) reads betas_[t - 1].
class Schedule {
 public:
  // Each beta must lie in (0, 1).
  static Schedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_[index(t)]; }
  double alpha(int t) const { return alphas_[index(t)]; }
  double alpha_bar(int t) const { return alpha_bars_[index(t)]; }
  // Posterior variance; equals beta(1) at t = 1.
  double beta_tilde(int t) const { return beta_tildes_[index(t)]; }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  std::size_t index(int t) const;

  std::vector<double> betas_, alphas_, alpha_bars_, beta_tildes_;
};

// beta linearly interpolated from beta_start to beta_end, endpoints inclusive.
Schedule linear_schedule(int steps, double beta_start, double beta_end);
inline Schedule linear_schedule(const ScheduleConfig& c) {
  return linear_schedule(c.steps, c.beta_start, c.beta_end);
}

}  // namespace diffeeg
