#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "diffeeg/signal.hpp"

using namespace diffeeg;
using ad::Shape;
using ad::Tensor;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Mean squared DFT magnitude over [f_lo, f_hi] Hz, by direct summation.
double band_power(std::span<const double> x, double fs, double f_lo, double f_hi) {
  const std::size_t n = x.size();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / n;
    if (f < f_lo || f > f_hi) continue;
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      re += x[i] * std::cos(kTwoPi * k * i / n);
      im -= x[i] * std::sin(kTwoPi * k * i / n);
    }
    total += (re * re + im * im) / n;
    ++count;
  }
  return total / static_cast<double>(count);
}

double span_band_power(const Recording& rec, double from_s, double to_s, double f_lo, double f_hi) {
  const auto a = static_cast<std::size_t>(from_s * rec.sample_rate);
  const auto b = static_cast<std::size_t>(to_s * rec.sample_rate);
  const std::size_t win = 512;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    const auto row = rec.samples.row(c);
    for (std::size_t s = a; s + win <= b; s += win) {
      total += band_power(row.subspan(s, win), rec.sample_rate, f_lo, f_hi);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * neg.size());
}

}  // namespace

TEST_CASE("stft geometry") {
  CHECK(stft_frames(7680, 256, 256) == 30);
  CHECK(stft_frames(512, 32, 32) == 16);
  CHECK(stft_frames(1000, 400, 100) == 7);
  Tensor seg(Shape{2, 7680});
  const auto s = stft_magnitude(seg, 256, 256);
  CHECK(s.bins() == 129);
  CHECK(s.frames() == 30);
  CHECK_THROWS_AS(stft_magnitude(Tensor(Shape{1, 100}), 128, 64), std::invalid_argument);
  CHECK_THROWS_AS(stft_magnitude(Tensor(Shape{1, 100}), 16, 0), std::invalid_argument);
}

TEST_CASE("zero input gives a zero spectrogram") {
  const auto s = stft_magnitude(Tensor(Shape{3, 256}), 64, 32);
  for (double v : s.values.values()) CHECK(v == 0.0);
}

TEST_CASE("bin-center sinusoid peaks at its bin in every frame") {
  const std::size_t n = 64;
  const double fs = 128.0;
  for (std::size_t k : {1u, 5u, 12u, 31u}) {
    std::vector<double> x(1024);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(kTwoPi * (k * fs / n) * i / fs + 0.3);
    const auto s = stft_magnitude(x, n, 48);
    for (std::size_t f = 0; f < s.frames(); ++f) {
      std::size_t best = 0;
      for (std::size_t b = 1; b < s.bins(); ++b)
        if (s.values.at(b, f) > s.values.at(best, f)) best = b;
      CHECK(best == k);
    }
  }
}

TEST_CASE("spectrogram energy is bounded by frame energy times the window length") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 16 * static_cast<std::size_t>(rng.uniform_int(1, 8));
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal() * 3.0;
    const auto s = stft_magnitude(x, n, n);
    double spec = 0.0, frame = 0.0;
    for (double v : s.values.values()) {
      CHECK(v >= 0.0);
      spec += v * v;
    }
    for (double v : x) frame += v * v;
    CHECK(spec <= n * frame);
  }
}

TEST_CASE("shifting by one hop shifts the frames by one column") {
  Rng rng(6);
  const std::size_t win = 32, hop = 16;
  std::vector<double> x(16 * hop + win);
  for (auto& v : x) v = rng.normal();
  const auto full = stft_magnitude(x, win, hop);
  const auto shifted = stft_magnitude(std::span<const double>(x).subspan(hop), win, hop);
  REQUIRE(shifted.frames() + 1 == full.frames());
  for (std::size_t f = 0; f < shifted.frames(); ++f)
    for (std::size_t b = 0; b < full.bins(); ++b) CHECK(std::abs(shifted.values.at(b, f) - full.values.at(b, f + 1)) < 1e-9);
}

TEST_CASE("multichannel spectrogram is the channel mean and the conditioner its log1p") {
  Rng rng(7);
  Tensor seg = rng.normal_tensor(Shape{3, 128});
  const auto mean_spec = stft_magnitude(seg, 32, 32);
  Tensor manual(mean_spec.values.shape());
  for (std::size_t c = 0; c < 3; ++c) manual += stft_magnitude(seg.row(c), 32, 32).values;
  const auto cond = conditioner(seg, 32, 32);
  for (std::size_t i = 0; i < manual.size(); ++i) {
    CHECK(mean_spec.values[i] == doctest::Approx(manual[i] / 3.0).epsilon(1e-12));
    CHECK(cond.values[i] == doctest::Approx(std::log1p(mean_spec.values[i])).epsilon(1e-12));
  }
}

TEST_CASE("spectrogram recombination") {
  Rng rng(8);
  auto make = [&](std::size_t frames) {
    return Spectrogram{rng.normal_tensor(Shape{5, frames}), 8, 8};
  };
  SUBCASE("identical donors") {
    const auto a = make(30);
    const auto out = recombine_spectrograms(a, a, a, rng);
    CHECK(max_abs_diff(out.values, a.values) == 0.0);
  }
  SUBCASE("thirds come from distinct donors at frames 10 and 20") {
    const auto a = make(30), b = make(30), c = make(30);
    for (int trial = 0; trial < 20; ++trial) {
      const auto out = recombine_spectrograms(a, b, c, rng);
      std::vector<int> source(30, -1);
      for (std::size_t f = 0; f < 30; ++f) {
        int matched = 0;
        for (int d = 0; d < 3; ++d) {
          const auto& donor = d == 0 ? a : d == 1 ? b : c;
          bool same = true;
          for (std::size_t k = 0; k < 5; ++k) same = same && out.values.at(k, f) == donor.values.at(k, f);
          if (same) {
            source[f] = d;
            ++matched;
          }
        }
        CHECK(matched == 1);
      }
      for (std::size_t f = 0; f < 30; ++f) CHECK(source[f] == source[f / 10 * 10]);
      CHECK(source[0] != source[10]);
      CHECK(source[10] != source[20]);
      CHECK(source[0] != source[20]);
    }
  }
  SUBCASE("geometry mismatch") {
    CHECK_THROWS_AS(recombine_spectrograms(make(30), make(30), make(29), rng), std::invalid_argument);
  }
}

TEST_CASE("normalize") {
  Tensor seg(Shape{2, 2}, std::vector<double>{0.0, 2.0, 5.0, 5.0});
  const auto n = normalize(seg);
  CHECK(n.at(0, 0) == doctest::Approx(-1.0));
  CHECK(n.at(0, 1) == doctest::Approx(1.0));
  CHECK(n.at(1, 0) == 0.0);
  CHECK(n.at(1, 1) == 0.0);
  Rng rng(9);
  const auto x = rng.normal_tensor(Shape{4, 300});
  const auto once = normalize(x);
  CHECK(max_abs_diff(normalize(once), once) < 1e-12);
}

TEST_CASE("synthetic record determinism and annotations") {
  SyntheticProfile p;
  p.seed = 42;
  const auto a = synth_record(p, 600.0, {400.0});
  const auto b = synth_record(p, 600.0, {400.0});
  CHECK(a.channels() == 4);
  CHECK(a.length() == 600 * 64);
  CHECK(max_abs_diff(a.samples, b.samples) == 0.0);
  REQUIRE(a.annotations.size() == 1);
  CHECK(a.annotations[0].onset_s == 400.0);
  CHECK(a.annotations[0].offset_s == 460.0);
  CHECK(a.samples.all_finite());
  CHECK_THROWS_AS(synth_record(p, 600.0, {300.0, 200.0}), std::invalid_argument);
  CHECK_THROWS_AS(synth_record(p, 600.0, {700.0}), std::invalid_argument);
}

TEST_CASE("signature band power") {
  SyntheticProfile p;
  p.seed = 3;
  SUBCASE("no onsets: nothing at the signature frequency beyond background") {
    const auto rec = synth_record(p, 1200.0, {});
    auto silent = p;
    silent.signature_amp = 0.0;
    silent.ictal_amp = 0.0;
    const auto bg = synth_record(silent, 1200.0, {});
    const double ratio = span_band_power(rec, 0, 1200, 2.5, 3.5) / span_band_power(bg, 0, 1200, 2.5, 3.5);
    CHECK(ratio < 1.1);
    CHECK(ratio > 1.0 / 1.1);
  }
  SUBCASE("one onset at 3600 s") {
    const auto rec = synth_record(p, 3700.0, {3600.0});
    const double pre = span_band_power(rec, 1800, 3600, 2.5, 3.5);
    const double bg = span_band_power(rec, 0, 1800, 2.5, 3.5);
    CHECK(pre >= 3.0 * bg);
  }
}

TEST_CASE("band-power threshold separates preictal from interictal segments") {
  SyntheticProfile p;
  p.seed = 17;
  const double onset = 5.5 * 3600.0;
  const auto rec = synth_record(p, onset + 60.0, {onset});
  const std::size_t len = 8 * 64;
  std::vector<double> pre, inter;
  auto score = [&](double start_s) {
    const auto s = static_cast<std::size_t>(start_s * 64);
    double total = 0.0;
    for (std::size_t c = 0; c < rec.channels(); ++c)
      total += band_power(rec.samples.row(c).subspan(s, len), 64.0, 2.5, 3.5);
    return total;
  };
  for (double t = onset - 1800; t + 8 <= onset; t += 8) pre.push_back(score(t));
  for (double t = 0; t + 8 <= onset - 4 * 3600; t += 8) inter.push_back(score(t));
  CHECK(pairwise_auc(pre, inter) > 0.9);
}
