#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "diffeeg/rng.hpp"
#include "diffeeg/schedule.hpp"

using namespace diffeeg;

TEST_CASE("single-step schedule") {
  const auto s = linear_schedule(1, 0.1, 0.1);
  CHECK(s.steps() == 1);
  CHECK(s.beta(1) == doctest::Approx(0.1));
  CHECK(s.alpha(1) == doctest::Approx(0.9));
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9));
  CHECK(s.beta_tilde(1) == s.beta(1));
}

TEST_CASE("two explicit betas") {
  const auto s = Schedule::from_betas({0.1, 0.2});
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(s.beta_tilde(2) == doctest::Approx((1 - 0.9) / (1 - 0.72) * 0.2).epsilon(1e-14));
  CHECK(s.beta_tilde(2) == doctest::Approx(0.0714286).epsilon(1e-6));
}

TEST_CASE("default schedule decays below 0.3") {
  const auto s = linear_schedule(ScheduleConfig{});
  REQUIRE(s.steps() == 50);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(50) == doctest::Approx(0.05).epsilon(1e-15));
  for (int t = 2; t <= 50; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(50) < 0.30);
}

TEST_CASE("random schedules satisfy the derived identities") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int steps = static_cast<int>(rng.uniform_int(1, 200));
    const double lo = 1e-5 + rng.uniform() * 0.01;
    const double hi = lo + rng.uniform() * 0.2;
    const auto s = linear_schedule(steps, lo, hi);
    double prod = 1.0;
    for (int t = 1; t <= steps; ++t) {
      prod *= 1.0 - s.beta(t);
      CHECK(std::abs(s.alpha_bar(t) - prod) <= 1e-12);
      CHECK(s.alpha(t) == 1.0 - s.beta(t));
      CHECK(s.beta_tilde(t) <= s.beta(t));
      CHECK(s.beta(t) > 0.0);
      CHECK(s.beta(t) < 1.0);
    }
  }
}

TEST_CASE("invalid schedules and steps are rejected") {
  CHECK_THROWS_AS(linear_schedule(0, 0.1, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.3, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::from_betas({0.1, 1.5}), std::invalid_argument);
  const auto s = linear_schedule(5, 0.01, 0.02);
  CHECK_THROWS_AS(s.beta(0), std::out_of_range);
  CHECK_THROWS_AS(s.alpha_bar(6), std::out_of_range);
}
