#include <algorithm>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "diffeeg/balance.hpp"
#include "diffeeg/ops.hpp"

using namespace diffeeg;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

// n_inter interictal then preictal blocks of `per` abutting segments for each
// seizure; each sample holds a unique value.
std::vector<Segment> imbalanced(std::size_t n_inter, int seizures, std::size_t per, std::size_t len = 12) {
  std::vector<Segment> out;
  double value = 0.0;
  auto make = [&](Label label, int seizure, double start) {
    Segment s;
    s.data = Tensor(Shape{2, len});
    for (auto& v : s.data.values()) v = value++;
    s.label = label;
    s.seizure = seizure;
    s.start_s = start;
    out.push_back(std::move(s));
  };
  for (std::size_t i = 0; i < n_inter; ++i) make(Label::kInterictal, -1, static_cast<double>(i * len));
  for (int z = 0; z < seizures; ++z)
    for (std::size_t j = 0; j < per; ++j) make(Label::kPreictal, z, 1e6 * (z + 1) + static_cast<double>(j * len));
  return out;
}

class ZeroModel : public NoiseModel {
 public:
  Var predict(const Var& x_t, int, const Spectrogram&) const override { return ad::scale(x_t, 0.0); }
  ad::NamedParams parameters() const override { return {}; }
};

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_balance_method("sliding") == BalanceMethod::kSlidingWindow);
  CHECK(to_string(BalanceMethod::kDiffusion) == "diffusion");
  CHECK_THROWS_AS(parse_balance_method("smote"), std::invalid_argument);
}

TEST_CASE("downsampling") {
  const auto train = imbalanced(100, 2, 10);
  Rng rng(1);
  const auto out = downsample(train, rng);
  const auto [inter, pre] = class_counts(out);
  CHECK(inter == 20);
  CHECK(pre == 20);
  std::set<double> originals;
  for (const auto& s : train)
    if (!s.preictal()) originals.insert(s.data[0]);
  std::set<double> picked;
  for (const auto& s : out)
    if (!s.preictal()) {
      CHECK(originals.count(s.data[0]) == 1);
      CHECK(picked.insert(s.data[0]).second);
    }
  const auto balanced = imbalanced(5, 1, 5);
  const auto same = downsample(balanced, rng);
  REQUIRE(same.size() == balanced.size());
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i].data[0] == balanced[i].data[0]);
  CHECK_THROWS_AS(downsample(imbalanced(3, 1, 5), rng), std::invalid_argument);
}

TEST_CASE("sliding window arithmetic") {
  CHECK(sliding_window_count(60, 30, 5) == 7);
  CHECK(sliding_window_count(60, 30, 30) == 2);
  CHECK(sliding_window_count(29, 30, 5) == 0);
  CHECK(sliding_window_count(30, 30, 5) == 1);
  CHECK_THROWS_AS(sliding_window_count(60, 30, 0), std::invalid_argument);
  Tensor region(Shape{1, 60});
  for (std::size_t i = 0; i < 60; ++i) region[i] = static_cast<double>(i);
  const auto w = sliding_windows(region, 1.0, 30, 5);
  REQUIRE(w.size() == 7);
  for (std::size_t k = 0; k < 7; ++k) CHECK(w[k][0] == 5.0 * k);
  const auto tiles = sliding_windows(region, 1.0, 30, 30);
  REQUIRE(tiles.size() == 2);
  CHECK(tiles[1][0] == 30.0);
}

TEST_CASE("preictal regions rebuild contiguous signal") {
  auto train = imbalanced(3, 2, 4);
  train.erase(train.begin() + 3 + 1);  // gap inside seizure 0
  const auto regions = preictal_regions(train, 1.0);
  REQUIRE(regions.size() == 3);
  CHECK(regions[0].signal.dim(1) == 12);
  CHECK(regions[1].signal.dim(1) == 24);
  CHECK(regions[2].seizure == 1);
  CHECK(regions[2].signal.dim(1) == 48);
  CHECK(regions[2].signal.at(1, 13) == train.back().data.at(1, 1) - 2 * 24);
}

TEST_CASE("segment recombination") {
  Rng rng(2);
  const auto pool = imbalanced(0, 1, 5, 7680);
  SUBCASE("identical donors") {
    const std::vector<Segment> same(3, pool[0]);
    for (const auto& s : recombine(same, rng, 4)) CHECK(max_abs_diff(s.data, pool[0].data) == 0.0);
  }
  SUBCASE("thirds from distinct donors at 2560 and 5120") {
    for (const auto& s : recombine(pool, rng, 20)) {
      CHECK(s.preictal());
      CHECK(s.synthetic);
      std::vector<int> src;
      for (std::size_t l : {0u, 2559u, 2560u, 5119u, 5120u, 7679u}) {
        int found = -1;
        for (std::size_t d = 0; d < pool.size(); ++d)
          if (pool[d].data.at(1, l) == s.data.at(1, l)) found = static_cast<int>(d);
        REQUIRE(found >= 0);
        src.push_back(found);
      }
      CHECK(src[0] == src[1]);
      CHECK(src[2] == src[3]);
      CHECK(src[4] == src[5]);
      CHECK(src[0] != src[2]);
      CHECK(src[2] != src[4]);
      CHECK(src[0] != src[4]);
    }
  }
  SUBCASE("small pools still work; empty pools are rejected") {
    const std::vector<Segment> two(pool.begin(), pool.begin() + 2);
    CHECK(recombine(two, rng, 3).size() == 3);
    CHECK_THROWS_AS(recombine({}, rng, 1), std::invalid_argument);
  }
}

TEST_CASE("every method balances and is deterministic") {
  const auto train = imbalanced(100, 2, 10, 16);
  ZeroModel zero;
  DiffusionSource source;
  source.model = &zero;
  source.schedule = linear_schedule(4, 1e-3, 0.05);
  source.stft_window = 4;
  source.stft_hop = 4;
  for (auto method : {BalanceMethod::kDownsample, BalanceMethod::kSlidingWindow, BalanceMethod::kRecombine,
                      BalanceMethod::kDiffusion}) {
    BalancePlan plan;
    plan.method = method;
    plan.window_s = 16;
    plan.stride_s = 1;
    Rng a(5), b(5);
    const auto out = balance(train, plan, 1.0, a, &source);
    const auto again = balance(train, plan, 1.0, b, &source);
    const auto [inter, pre] = class_counts(out);
    CAPTURE(to_string(method));
    CHECK(inter == pre);
    CHECK(inter == (method == BalanceMethod::kDownsample ? 20u : 100u));
    REQUIRE(out.size() == again.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(max_abs_diff(out[i].data, again[i].data) == 0.0);
    for (const auto& s : out) CHECK(s.data.shape() == Shape{2, 16});
  }
}

TEST_CASE("sliding windows fall back to downsampling when windows run out") {
  const auto train = imbalanced(100, 1, 3, 10);
  BalancePlan plan;
  plan.method = BalanceMethod::kSlidingWindow;
  plan.window_s = 10;
  plan.stride_s = 5;
  Rng rng(3);
  const auto out = balance(train, plan, 1.0, rng);
  const auto [inter, pre] = class_counts(out);
  // Span 30 s: 5 windows, 3 of them already segments.
  CHECK(pre == 5);
  CHECK(inter == 5);
}

TEST_CASE("diffusion augmentation") {
  ZeroModel zero;
  DiffusionSource source;
  source.model = &zero;
  source.schedule = linear_schedule(3, 1e-3, 0.05);
  source.stft_window = 4;
  source.stft_hop = 4;
  Rng rng(4);
  const auto train = imbalanced(100, 2, 10, 16);
  const auto made = diffusion_augment(train, source, rng);
  CHECK(made.size() == 80);
  for (const auto& s : made) {
    CHECK(s.preictal());
    CHECK(s.synthetic);
    CHECK(s.data.shape() == Shape{2, 16});
  }
  CHECK(diffusion_augment(imbalanced(10, 1, 10, 16), source, rng).empty());
  DiffusionSource missing;
  CHECK_THROWS_AS(diffusion_augment(train, missing, rng), std::invalid_argument);
  BalancePlan plan;
  plan.method = BalanceMethod::kDiffusion;
  CHECK_THROWS_AS(balance(train, plan, 1.0, rng, nullptr), std::invalid_argument);

  SUBCASE("parallel generation matches serial") {
    source.jobs = 3;
    Rng r1(9), r2(9);
    const auto par = diffusion_augment(train, source, r1);
    source.jobs = 1;
    const auto ser = diffusion_augment(train, source, r2);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) CHECK(max_abs_diff(par[i].data, ser[i].data) == 0.0);
  }
}
