#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "diffeeg/network.hpp"
#include "diffeeg/ops.hpp"
#include "grad_check.hpp"

using namespace diffeeg;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

EpsNetConfig config(std::size_t h, std::size_t c, std::size_t n, std::size_t m, std::size_t len,
                    std::size_t bins, std::array<std::size_t, 2> strides) {
  EpsNetConfig cfg;
  cfg.input_channels = h;
  cfg.residual_channels = c;
  cfg.layers = n;
  cfg.blocks = m;
  cfg.segment_length = len;
  cfg.cond_bins = bins;
  cfg.upsample_t = strides;
  cfg.cond_frames = len / (strides[0] * strides[1]);
  return cfg;
}

void fill_params(const ad::NamedParams& params, Rng* rng, double scale) {
  for (const auto& [name, p] : params) {
    auto v = p;
    for (auto& x : v.mutable_value().values()) x = rng ? scale * rng->normal() : 0.0;
  }
}

Var find(const ad::NamedParams& params, const std::string& name) {
  for (const auto& [n, p] : params)
    if (n == name) return p;
  throw std::out_of_range(name);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(config(4, 16, 6, 3, 512, 17, {4, 8}).validate());
  CHECK_THROWS_AS(config(4, 16, 7, 3, 512, 17, {4, 8}).validate(), std::invalid_argument);
  auto bad = config(4, 16, 6, 3, 512, 17, {4, 8});
  bad.cond_frames = 15;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = config(4, 16, 6, 3, 512, 17, {4, 8});
  bad.kernel = 4;
  CHECK_THROWS_AS(EpsNet(bad, 1), std::invalid_argument);
}

TEST_CASE("dilations reset per block and double within") {
  EpsNet net(config(1, 2, 12, 3, 64, 3, {2, 4}), 1);
  const std::vector<std::size_t> want{1, 2, 4, 8, 1, 2, 4, 8, 1, 2, 4, 8};
  CHECK(net.dilations() == want);
  CHECK(net.receptive_field() == 1 + 3 * 2 * 15);
}

TEST_CASE("impulse response support equals the receptive field") {
  for (auto [n, m] : {std::pair<std::size_t, std::size_t>{6, 2}, {4, 1}, {6, 3}, {3, 3}}) {
    EpsNet net(config(1, 3, n, m, 128, 3, {4, 4}), 11);
    Tensor impulse(Shape{1, 128});
    impulse[64] = 1.0;
    const auto out = net.linear_response(impulse);
    double peak = 0.0;
    for (double v : out.values()) peak = std::max(peak, std::abs(v));
    std::size_t lo = 128, hi = 0;
    for (std::size_t c = 0; c < out.dim(0); ++c)
      for (std::size_t l = 0; l < 128; ++l)
        if (std::abs(out.at(c, l)) > 1e-12 * peak) {
          lo = std::min(lo, l);
          hi = std::max(hi, l);
        }
    CHECK(hi - lo + 1 == net.receptive_field());
    CHECK(64 - lo == hi - 64);
  }
}

TEST_CASE("forward shape, zero output head and zero parameters") {
  EpsNet net(config(4, 16, 6, 3, 512, 17, {4, 8}), 2);
  Rng rng(3);
  const Var x = Var::constant(rng.normal_tensor(Shape{4, 512}));
  const Spectrogram cond{rng.normal_tensor(Shape{17, 16}), 32, 32};
  const auto out = net.predict(x, 10, cond);
  CHECK(out.shape() == Shape{4, 512});
  // The last layer starts at zero.
  for (double v : out.value().values()) CHECK(v == 0.0);
  fill_params(net.parameters(), &rng, 0.3);
  const auto a = net.predict(x, 10, cond).value();
  const auto b = net.predict(x, 10, cond).value();
  CHECK(max_abs_diff(a, b) == 0.0);
  CHECK(max_abs_diff(net.bind(cond)(x.value(), 10), a) < 1e-12);
  double norm = 0.0;
  for (double v : a.values()) norm += v * v;
  CHECK(norm > 0.0);
  fill_params(net.parameters(), nullptr, 0.0);
  for (double v : net.predict(x, 3, cond).value().values()) CHECK(v == 0.0);
}

TEST_CASE("geometry mismatches are rejected") {
  EpsNet net(config(2, 4, 2, 1, 32, 5, {2, 4}), 2);
  Rng rng(4);
  const Spectrogram good{rng.normal_tensor(Shape{5, 4}), 8, 8};
  const Spectrogram bad_frames{rng.normal_tensor(Shape{5, 3}), 8, 8};
  CHECK_THROWS_AS(net.predict(Var::constant(Tensor(Shape{2, 32})), 1, bad_frames), std::invalid_argument);
  CHECK_THROWS_AS(net.predict(Var::constant(Tensor(Shape{3, 32})), 1, good), std::invalid_argument);
  CHECK_THROWS_AS(net.forward(Var::constant(Tensor(Shape{2, 32})), 1, Var::constant(Tensor(Shape{5, 31}))),
                  std::invalid_argument);
}

TEST_CASE("conditioner upsampling") {
  SUBCASE("30 frames, strides 16 and 16 reach 7680 samples") {
    EpsNet net(config(1, 2, 1, 1, 7680, 129, {16, 16}), 1);
    Rng rng(5);
    const auto up = net.upsample_conditioner(Spectrogram{rng.normal_tensor(Shape{129, 30}), 256, 256});
    CHECK(up.shape() == Shape{129, 7680});
  }
  SUBCASE("identity kernels with unit strides") {
    EpsNet net(config(1, 2, 1, 1, 1, 6, {1, 1}), 1);
    const auto params = net.parameters();
    for (const char* name : {"upsample0.w", "upsample1.w"}) {
      auto w = find(params, name);
      REQUIRE(w.shape() == Shape{1, 1, 3, 1});
      w.mutable_value().fill(0.0);
      w.mutable_value()[1] = 1.0;
    }
    const Spectrogram spec{Tensor(Shape{6, 1}, std::vector<double>{0.1, 0.5, 2.0, 0.0, 3.0, 1.5}), 10, 1};
    const auto up = net.upsample_conditioner(spec);
    CHECK(max_abs_diff(up.value(), spec.values) == 0.0);
  }
  SUBCASE("kernel time extent") {
    CHECK(upsample_kernel_t(1) == 1);
    CHECK(upsample_kernel_t(8) == 16);
    CHECK(upsample_kernel_t(3) == 3);
  }
}

TEST_CASE("finite-difference gradient of the full network") {
  EpsNet net(config(2, 4, 2, 2, 32, 5, {2, 4}), 7);
  Rng rng(8);
  fill_params(net.parameters(), &rng, 0.4);
  const Var x = Var::parameter(rng.normal_tensor(Shape{2, 32}));
  const Spectrogram cond{rng.normal_tensor(Shape{5, 4}), 8, 8};
  std::vector<Var> inputs{x};
  for (const auto& [name, p] : net.parameters()) inputs.push_back(p);
  const double err = testing::grad_check([&] { return testing::project(net.predict(x, 21, cond)); }, inputs);
  CHECK(err < 1e-3);
}
