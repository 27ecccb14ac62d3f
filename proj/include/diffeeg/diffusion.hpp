#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "diffeeg/autodiff.hpp"
#include "diffeeg/optim.hpp"
#include "diffeeg/rng.hpp"
#include "diffeeg/schedule.hpp"
#include "diffeeg/signal.hpp"

namespace diffeeg {

inline constexpr std::size_t kStepEmbeddingSize = 128;

struct StepEmbedding {
  double t = 0.0;
  // [sin(10^(4i/63) t) for i < 64, then cos of the same arguments]
  std::array<double, kStepEmbeddingSize> vector{};
};

StepEmbedding step_embedding(double t);

// The noise predictor eps(x_t, t, conditioner).
class NoiseModel {
 public:
  // Gradient-free prediction for one fixed conditioner.
  using Predictor = std::function<ad::Tensor(const ad::Tensor& x_t, int t)>;

  virtual ~NoiseModel() = default;

  virtual ad::Var predict(const ad::Var& x_t, int t, const Spectrogram& cond) const = 0;
  // The default wraps predict(); models override it to hoist work that
  // depends only on the conditioner out of the sampling loop.
  virtual Predictor bind(const Spectrogram& cond) const;
  virtual ad::NamedParams parameters() const = 0;
};

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
ad::Tensor forward_diffuse(const ad::Tensor& x0, int t, const ad::Tensor& eps, const Schedule& sched);

// Mean squared error between eps and the model's prediction on the noised
// input, for a given step and noise draw.
ad::Var training_loss_at(const ad::Tensor& x0, const Spectrogram& cond, const NoiseModel& model,
                         const Schedule& sched, int t, const ad::Tensor& eps);

// t uniform on 1..T from t_rng, eps standard normal from eps_rng.
ad::Var training_loss(const ad::Tensor& x0, const Spectrogram& cond, const NoiseModel& model,
                      const Schedule& sched, Rng& t_rng, Rng& eps_rng);

struct TrainingExample {
  ad::Tensor x0;
  Spectrogram cond;
};

struct TrainOptions {
  long iters = 500;  // total, counting iterations already in a resumed state
  std::size_t batch = 8;
  double lr = 2e-4;
  std::uint64_t seed = 0;
};

struct TrainState {
  long iteration = 0;
  std::uint64_t seed = 0;
  Adam optimizer;
  // Mean batch loss of each iteration run by this call, in order.
  std::vector<double> losses;
};

using IterationCallback = std::function<void(long iteration, double loss)>;

// Adam steps on the batch-mean training loss until state.iteration reaches
// opts.iters. Iteration i draws its batch, steps and noise from streams split
// off (seed, i), so a resumed run reproduces an uninterrupted one exactly.
TrainState train(const std::vector<TrainingExample>& data, NoiseModel& model, const Schedule& sched,
                 const TrainOptions& opts, TrainState state = {}, const IterationCallback& on_iteration = {});

// Ancestral sampling from x_T ~ N(0, I) of the given shape, T model calls.
// The last step adds no noise.
ad::Tensor sample(const NoiseModel::Predictor& predict, const Schedule& sched, Rng& rng,
                  const ad::Shape& shape);
ad::Tensor sample(const NoiseModel& model, const Spectrogram& cond, const Schedule& sched, Rng& rng,
                  std::size_t channels, std::size_t length);

}  // namespace diffeeg
