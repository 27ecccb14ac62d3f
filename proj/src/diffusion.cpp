#include "diffeeg/diffusion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "diffeeg/ops.hpp"

namespace diffeeg {

using ad::Tensor;
using ad::Var;

StepEmbedding step_embedding(double t) {
  if (t < 0.0) throw std::invalid_argument("step_embedding: t must be non-negative");
  StepEmbedding e;
  e.t = t;
  constexpr std::size_t half = kStepEmbeddingSize / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double arg = std::pow(10.0, 4.0 * static_cast<double>(i) / 63.0) * t;
    e.vector[i] = std::sin(arg);
    e.vector[half + i] = std::cos(arg);
  }
  return e;
}

NoiseModel::Predictor NoiseModel::bind(const Spectrogram& cond) const {
  return [this, cond](const Tensor& x_t, int t) {
    ad::NoGradGuard guard;
    return predict(Var::constant(x_t), t, cond).value();
  };
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps, const Schedule& sched) {
  if (!x0.same_shape(eps)) {
    throw std::invalid_argument("forward_diffuse: eps shape " + ad::shape_string(eps.shape()) +
                                " differs from x0 shape " + ad::shape_string(x0.shape()));
  }
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Var training_loss_at(const Tensor& x0, const Spectrogram& cond, const NoiseModel& model,
                     const Schedule& sched, int t, const Tensor& eps) {
  const Var x_t = Var::constant(forward_diffuse(x0, t, eps, sched));
  return ad::mse(model.predict(x_t, t, cond), Var::constant(eps));
}

Var training_loss(const Tensor& x0, const Spectrogram& cond, const NoiseModel& model, const Schedule& sched,
                  Rng& t_rng, Rng& eps_rng) {
  const int t = static_cast<int>(t_rng.uniform_int(1, sched.steps()));
  return training_loss_at(x0, cond, model, sched, t, eps_rng.normal_tensor(x0.shape()));
}

TrainState train(const std::vector<TrainingExample>& data, NoiseModel& model, const Schedule& sched,
                 const TrainOptions& opts, TrainState state, const IterationCallback& on_iteration) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (opts.batch == 0) throw std::invalid_argument("train: batch size must be positive");
  const auto params = model.parameters();
  if (state.optimizer.first_moments().empty()) {
    AdamOptions ao;
    ao.lr = opts.lr;
    state.optimizer = Adam(params, ao);
    state.seed = opts.seed;
  }
  state.optimizer.set_lr(opts.lr);
  state.losses.clear();
  const Rng root(state.seed);
  while (state.iteration < opts.iters) {
    const auto i = static_cast<std::uint64_t>(++state.iteration);
    const Rng iter = root.split("iter", i);
    Rng pick = iter.split("batch");
    ad::zero_grad(params);
    std::vector<Var> losses;
    losses.reserve(opts.batch);
    for (std::size_t b = 0; b < opts.batch; ++b) {
      const auto& ex = data[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))];
      Rng t_rng = iter.split("t", b);
      Rng eps_rng = iter.split("eps", b);
      losses.push_back(training_loss(ex.x0, ex.cond, model, sched, t_rng, eps_rng));
    }
    Var total = losses.front();
    for (std::size_t b = 1; b < losses.size(); ++b) total = ad::add(total, losses[b]);
    const Var loss = ad::scale(total, 1.0 / static_cast<double>(opts.batch));
    ad::backward(loss);
    state.optimizer.step(params);
    state.losses.push_back(loss.item());
    if (on_iteration) on_iteration(state.iteration, loss.item());
  }
  return state;
}

Tensor sample(const NoiseModel::Predictor& predict, const Schedule& sched, Rng& rng, const ad::Shape& shape) {
  Tensor x = rng.normal_tensor(shape);
  for (int t = sched.steps(); t >= 1; --t) {
    const Tensor eps = predict(x, t);
    if (!eps.same_shape(x)) throw std::invalid_argument("sample: prediction shape differs from x_t");
    const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double sqrt_alpha = std::sqrt(sched.alpha(t));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - coef * eps[i]) / sqrt_alpha;
    if (t > 1) {
      const double sigma = std::sqrt(sched.beta_tilde(t));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += sigma * rng.normal();
    }
  }
  return x;
}

Tensor sample(const NoiseModel& model, const Spectrogram& cond, const Schedule& sched, Rng& rng,
              std::size_t channels, std::size_t length) {
  return sample(model.bind(cond), sched, rng, ad::Shape{channels, length});
}

}  // namespace diffeeg
