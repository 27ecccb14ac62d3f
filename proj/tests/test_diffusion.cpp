#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "diffeeg/diffusion.hpp"
#include "diffeeg/network.hpp"
#include "diffeeg/ops.hpp"
#include "grad_check.hpp"

using namespace diffeeg;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

Spectrogram empty_cond() { return Spectrogram{Tensor(Shape{1, 1}), 1, 1}; }

class ZeroModel : public NoiseModel {
 public:
  Var predict(const Var& x_t, int, const Spectrogram&) const override {
    return ad::scale(x_t, 0.0);
  }
  ad::NamedParams parameters() const override { return {}; }
};

// Recovers the injected noise exactly from x_t because it knows x0.
class CheatingModel : public NoiseModel {
 public:
  CheatingModel(Tensor x0, const Schedule& s) : x0_(std::move(x0)), sched_(s) {}
  Var predict(const Var& x_t, int t, const Spectrogram&) const override {
    const double ab = sched_.alpha_bar(t);
    Tensor eps(x_t.shape());
    for (std::size_t i = 0; i < eps.size(); ++i)
      eps[i] = (x_t.value()[i] - std::sqrt(ab) * x0_[i]) / std::sqrt(1.0 - ab);
    return Var::constant(eps);
  }
  ad::NamedParams parameters() const override { return {}; }

 private:
  Tensor x0_;
  const Schedule& sched_;
};

double mean_of(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return s / static_cast<double>(x.size());
}

double variance_of(const Tensor& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x.values()) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

EpsNetConfig toy_config(std::size_t h, std::size_t c, std::size_t layers, std::size_t blocks) {
  EpsNetConfig cfg;
  cfg.input_channels = h;
  cfg.residual_channels = c;
  cfg.layers = layers;
  cfg.blocks = blocks;
  cfg.segment_length = 32;
  cfg.cond_bins = 5;
  cfg.cond_frames = 4;
  cfg.upsample_t = {2, 4};
  return cfg;
}

void randomize(const ad::NamedParams& params, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (const auto& [name, p] : params) {
    auto v = p;
    for (auto& x : v.mutable_value().values()) x = scale * rng.normal();
  }
}

}  // namespace

TEST_CASE("step embedding") {
  const auto zero = step_embedding(0.0);
  CHECK(zero.vector.size() == 128);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(zero.vector[i] == 0.0);
    CHECK(zero.vector[64 + i] == 1.0);
  }
  const auto one = step_embedding(1.0);
  CHECK(one.vector[0] == doctest::Approx(0.841471).epsilon(1e-6));
  CHECK(one.vector[64] == doctest::Approx(std::cos(1.0)));
  const auto e = step_embedding(7.0);
  CHECK(e.vector[63] == doctest::Approx(std::sin(1e4 * 7.0)));
  CHECK(e.vector[10] == doctest::Approx(std::sin(std::pow(10.0, 40.0 / 63.0) * 7.0)));
  CHECK_THROWS_AS(step_embedding(-1.0), std::invalid_argument);
}

TEST_CASE("forward diffusion") {
  const auto sched = Schedule::from_betas({0.1, 0.2});
  Rng rng(1);
  const Tensor x0 = rng.normal_tensor(Shape{2, 5});
  SUBCASE("zero noise scales the data") {
    const auto out = forward_diffuse(x0, 2, Tensor(x0.shape()), sched);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == std::sqrt(sched.alpha_bar(2)) * x0[i]);
  }
  SUBCASE("vanishing noise keeps the data") {
    const auto tiny = Schedule::from_betas({1e-8});
    const auto out = forward_diffuse(x0, 1, rng.normal_tensor(x0.shape()), tiny);
    CHECK(max_abs_diff(out, x0) < 1e-3);
  }
  SUBCASE("affine in data and noise") {
    const Tensor eps = rng.normal_tensor(x0.shape());
    const Tensor x1 = rng.normal_tensor(x0.shape()), e1 = rng.normal_tensor(x0.shape());
    Tensor xs = x0, es = eps;
    xs += x1;
    es += e1;
    Tensor expect = forward_diffuse(x0, 2, eps, sched);
    expect += forward_diffuse(x1, 2, e1, sched);
    CHECK(max_abs_diff(forward_diffuse(xs, 2, es, sched), expect) < 1e-12);
    const Tensor z(x0.shape());
    CHECK(max_abs_diff(forward_diffuse(z, 1, z, sched), z) == 0.0);
  }
  SUBCASE("Monte-Carlo moments") {
    const Tensor one(Shape{100000}, 1.0);
    const auto out = forward_diffuse(one, 2, rng.normal_tensor(one.shape()), sched);
    CHECK(mean_of(out) == doctest::Approx(std::sqrt(0.72)).epsilon(0.01 / 0.8485));
    CHECK(std::abs(variance_of(out) - 0.28) < 0.01);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(forward_diffuse(x0, 3, x0, sched), std::out_of_range);
    CHECK_THROWS_AS(forward_diffuse(x0, 1, Tensor(Shape{5, 2}), sched), std::invalid_argument);
  }
}

TEST_CASE("training loss") {
  const auto sched = linear_schedule(ScheduleConfig{});
  Rng rng(2);
  const Tensor x0 = rng.normal_tensor(Shape{1, 64});
  SUBCASE("zero predictor has chi-square mean one") {
    ZeroModel zero;
    double total = 0.0;
    for (std::uint64_t i = 0; i < 200; ++i) {
      Rng t_rng = Rng(3).split("t", i), eps_rng = Rng(3).split("eps", i);
      const double loss = training_loss(x0, empty_cond(), zero, sched, t_rng, eps_rng).item();
      CHECK(loss >= 0.0);
      total += loss;
    }
    CHECK(std::abs(total / 200.0 - 1.0) < 0.05);
  }
  SUBCASE("a predictor returning the injected noise has zero loss") {
    CheatingModel cheat(x0, sched);
    for (std::uint64_t i = 0; i < 20; ++i) {
      Rng t_rng = Rng(4).split("t", i), eps_rng = Rng(4).split("eps", i);
      CHECK(training_loss(x0, empty_cond(), cheat, sched, t_rng, eps_rng).item() < 1e-20);
    }
  }
  SUBCASE("gradient w.r.t. network parameters matches finite differences") {
    EpsNet net(toy_config(2, 3, 2, 1), 5);
    randomize(net.parameters(), 6, 0.4);
    const Tensor x = rng.normal_tensor(Shape{2, 32});
    const Spectrogram cond{rng.normal_tensor(Shape{5, 4}), 8, 8};
    const Tensor eps = rng.normal_tensor(x.shape());
    std::vector<Var> params;
    for (const auto& [name, p] : net.parameters()) params.push_back(p);
    const double err = testing::grad_check(
        [&] { return training_loss_at(x, cond, net, sched, 17, eps); }, params);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("training") {
  const auto sched = linear_schedule(ScheduleConfig{});
  EpsNetConfig cfg = toy_config(1, 8, 2, 1);
  std::vector<TrainingExample> data;
  for (int i = 0; i < 4; ++i) data.push_back({Tensor(Shape{1, 32}, 1.0), Spectrogram{Tensor(Shape{5, 4}, 0.5), 8, 8}});

  SUBCASE("empty dataset is rejected") {
    EpsNet net(cfg, 1);
    CHECK_THROWS_AS(train({}, net, sched, TrainOptions{}), std::invalid_argument);
  }
  SUBCASE("zero iterations leave parameters unchanged") {
    EpsNet net(cfg, 1);
    std::vector<Tensor> before;
    for (const auto& [n, p] : net.parameters()) before.push_back(p.value());
    TrainOptions opts;
    opts.iters = 0;
    const auto state = train(data, net, sched, opts);
    CHECK(state.iteration == 0);
    CHECK(state.losses.empty());
    std::size_t i = 0;
    for (const auto& [n, p] : net.parameters()) CHECK(max_abs_diff(p.value(), before[i++]) == 0.0);
  }
  SUBCASE("determinism and exact resume") {
    TrainOptions opts;
    opts.iters = 12;
    opts.batch = 3;
    opts.lr = 1e-3;
    opts.seed = 9;
    EpsNet a(cfg, 1), b(cfg, 1), c(cfg, 1);
    const auto sa = train(data, a, sched, opts);
    const auto sb = train(data, b, sched, opts);
    auto half = opts;
    half.iters = 5;
    auto sc = train(data, c, sched, half);
    std::vector<double> trace = sc.losses;
    sc = train(data, c, sched, opts, std::move(sc));
    trace.insert(trace.end(), sc.losses.begin(), sc.losses.end());
    CHECK(sa.losses == sb.losses);
    CHECK(trace == sa.losses);
    CHECK(sc.iteration == 12);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(max_abs_diff(pa[i].second.value(), pb[i].second.value()) == 0.0);
      CHECK(max_abs_diff(pa[i].second.value(), pc[i].second.value()) == 0.0);
    }
  }
  SUBCASE("loss halves on a constant signal within 300 iterations") {
    EpsNet net(cfg, 3);
    TrainOptions opts;
    opts.iters = 300;
    opts.lr = 2e-3;
    opts.seed = 4;
    const auto state = train(data, net, sched, opts);
    REQUIRE(state.losses.size() == 300);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 20; ++i) {
      first += state.losses[i];
      last += state.losses[280 + i];
    }
    MESSAGE("first-20 mean " << first / 20 << " last-20 mean " << last / 20);
    CHECK(last < 0.5 * first);
  }
}

TEST_CASE("sampler") {
  SUBCASE("single step with a zero predictor divides by sqrt(alpha)") {
    const auto sched = Schedule::from_betas({0.3});
    Rng draw(77);
    const Tensor x1 = draw.normal_tensor(Shape{2, 6});
    Rng rng(77);
    const auto out = sample(ZeroModel{}, empty_cond(), sched, rng, 2, 6);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == x1[i] / std::sqrt(0.7));
  }
  SUBCASE("exactly T predictor calls with descending steps") {
    const auto sched = linear_schedule(13, 1e-3, 0.1);
    std::vector<int> steps;
    Rng rng(1);
    const auto out = sample(
        [&](const Tensor& x, int t) {
          steps.push_back(t);
          return Tensor(x.shape());
        },
        sched, rng, Shape{3, 7});
    CHECK(out.shape() == Shape{3, 7});
    REQUIRE(steps.size() == 13);
    for (int i = 0; i < 13; ++i) CHECK(steps[i] == 13 - i);
  }
  SUBCASE("zero predictor variance follows the scalar recursion") {
    const auto sched = linear_schedule(ScheduleConfig{});
    // Var(x_{t-1}) = Var(x_t)/alpha_t + beta_tilde_t, no noise at t = 1.
    double v = 1.0;
    for (int t = sched.steps(); t >= 1; --t) v = v / sched.alpha(t) + (t > 1 ? sched.beta_tilde(t) : 0.0);
    Rng rng(8);
    const auto out = sample(ZeroModel{}, empty_cond(), sched, rng, 1, 10000);
    // Sample variance of 1e4 normals has relative standard error sqrt(2/1e4).
    CHECK(std::abs(variance_of(out) / v - 1.0) < 4.0 * std::sqrt(2.0 / 10000));
    CHECK(std::abs(mean_of(out)) < 4.0 * std::sqrt(v / 10000));
  }
  SUBCASE("closed-form optimal predictor recovers Gaussian data") {
    // alpha_bar_T must be near zero for x_T ~ N(0, 1) to match q(x_T).
    const auto sched = linear_schedule(1000, 1e-4, 0.02);
    const double mu = 2.0, sigma2 = 0.25;
    const auto optimal = [&](const Tensor& x, int t) {
      const double ab = sched.alpha_bar(t);
      Tensor eps(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i)
        eps[i] = std::sqrt(1.0 - ab) * (x[i] - std::sqrt(ab) * mu) / (ab * sigma2 + 1.0 - ab);
      return eps;
    };
    Rng rng(10);
    const auto out = sample(optimal, sched, rng, Shape{1, 10000});
    CHECK(std::abs(mean_of(out) - mu) < 0.05 * mu);
    CHECK(std::abs(variance_of(out) - sigma2) < 0.10 * sigma2);
  }
}
