#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "diffeeg/dataset.hpp"
#include "diffeeg/errors.hpp"

using namespace diffeeg;
using ad::Shape;
using ad::Tensor;

namespace {

// One sample per 6 s keeps multi-day fixtures small; 30 s = 5 samples.
constexpr double kFs = 1.0 / 6.0;

Recording blank(double duration_s, std::vector<Annotation> seizures, double fs = kFs) {
  Recording r;
  r.id = "fixture";
  r.sample_rate = fs;
  r.samples = Tensor(Shape{1, static_cast<std::size_t>(std::llround(duration_s * fs))});
  for (std::size_t i = 0; i < r.length(); ++i) r.samples[i] = static_cast<double>(i);
  r.annotations = std::move(seizures);
  return r;
}

// Whole windows of `seg` seconds in [a, b).
long windows(double a, double b, double seg) { return b <= a ? 0 : static_cast<long>(std::floor((b - a) / seg + 1e-9)); }

struct Expected {
  long preictal = 0;
  long interictal = 0;
};

// Counts by interval arithmetic on already merged seizures.
Expected oracle(const std::vector<Annotation>& merged, double duration, const DatasetSpec& spec) {
  Expected e;
  const double pre = spec.preictal_minutes * 60, gap = spec.interictal_gap_hours * 3600, seg = spec.segment_seconds;
  double prev_end = 0.0;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const double from = std::max({merged[i].onset_s - pre, i ? merged[i - 1].offset_s : 0.0, 0.0});
    e.preictal += windows(from, merged[i].onset_s, seg);
    e.interictal += windows(prev_end, merged[i].onset_s - gap, seg);
    prev_end = std::max(prev_end, merged[i].offset_s + gap);
  }
  e.interictal += windows(prev_end, duration, seg);
  return e;
}

std::vector<Annotation> spaced(int n, double first_onset, double spacing, double duration = 60.0) {
  std::vector<Annotation> a;
  for (int i = 0; i < n; ++i) a.push_back({first_onset + i * spacing, first_onset + i * spacing + duration});
  return a;
}

}  // namespace

TEST_CASE("merging seizures") {
  auto m = merge_seizures({{1000, 1200}, {1800, 1900}}, 15);
  REQUIRE(m.size() == 1);
  CHECK(m[0].onset_s == 1000);
  CHECK(m[0].offset_s == 1900);
  m = merge_seizures({{1000, 1200}}, 15);
  CHECK(m.size() == 1);
  m = merge_seizures({{0, 60}, {600, 660}, {1200, 1260}}, 15);
  REQUIRE(m.size() == 1);
  CHECK(m[0].onset_s == 0);
  CHECK(m[0].offset_s == 1260);
  // Exactly 15 minutes is not "less than".
  CHECK(merge_seizures({{0, 100}, {1000, 1100}}, 15).size() == 2);
  CHECK_THROWS_AS(merge_seizures({{500, 600}, {100, 200}}, 15), std::invalid_argument);
}

TEST_CASE("preictal tiling before an onset") {
  DatasetSpec spec;
  const auto segs = label_segments(blank(3700, {{3600, 3660}}, 2.0), spec);
  std::vector<double> starts;
  for (const auto& s : segs) {
    CHECK(s.preictal());
    CHECK(s.seizure == 0);
    CHECK(s.data.shape() == Shape{1, 60});
    starts.push_back(s.start_s);
  }
  REQUIRE(starts.size() == 60);
  for (std::size_t i = 0; i < 60; ++i) CHECK(starts[i] == doctest::Approx(1800 + 30.0 * i));
  CHECK(segs[0].data[0] == 3600.0);  // sample index of 1800 s at 2 Hz
}

TEST_CASE("no seizures: every whole window is interictal") {
  const auto segs = label_segments(blank(3000 + 20, {}), DatasetSpec{});
  CHECK(segs.size() == 100);
  for (const auto& s : segs) CHECK(!s.preictal());
}

TEST_CASE("the zone within four hours of a seizure is discarded") {
  DatasetSpec spec;
  const double onset = 10 * 3600.0;
  const auto segs = label_segments(blank(onset + 60, {{onset, onset + 60}}), spec);
  for (const auto& s : segs) {
    if (s.preictal()) {
      CHECK(s.start_s >= onset - 1800);
    } else {
      CHECK(s.start_s + 30 <= onset - 4 * 3600 + 1e-9);
    }
    CHECK(!(s.start_s >= onset - 3 * 3600 - 30 && s.start_s < onset - 3 * 3600 + 30));
  }
  const auto [inter, pre] = class_counts(segs);
  CHECK(pre == 60);
  CHECK(inter == 6 * 120);
}

TEST_CASE("fractional segment length is rejected") {
  DatasetSpec spec;
  spec.segment_seconds = 30.5;
  CHECK_THROWS_AS(label_segments(blank(100, {}, 1.0), spec), std::invalid_argument);
  CHECK(segment_samples(256, 30) == 7680);
}

TEST_CASE("scripted fixture matches the interval oracle") {
  DatasetSpec spec;
  // Cluster at 20 h (three seizures < 15 min apart), isolated seizures at
  // 30 h and 30.4 h (preictal clipped by the previous offset), 45 h.
  std::vector<Annotation> raw{{72000, 72060},  {72500, 72560},   {73200, 73300},
                              {108000, 108090}, {109440, 109500}, {162000, 162040}};
  const double duration = 60 * 3600.0;
  const auto merged = merge_seizures(raw, spec.merge_gap_minutes);
  REQUIRE(merged.size() == 4);
  CHECK(merged[0].offset_s == 73300);
  const auto rec = blank(duration, raw);
  const auto segs = label_segments(rec, spec);
  const auto want = oracle(merged, duration, spec);
  const auto [inter, pre] = class_counts(segs);
  CHECK(static_cast<long>(pre) == want.preictal);
  CHECK(static_cast<long>(inter) == want.interictal);
  // Second isolated seizure starts 1350 s after the first ends: 45 windows.
  long clipped = 0;
  for (const auto& s : segs) clipped += s.seizure == 2 ? 1 : 0;
  CHECK(clipped == 45);

  SUBCASE("segment invariants") {
    std::set<double> starts;
    for (const auto& s : segs) {
      CHECK(starts.insert(s.start_s).second);
      for (const auto& sz : merged) CHECK((s.start_s + 30 <= sz.onset_s || s.start_s >= sz.offset_s));
    }
    CHECK(std::is_sorted(segs.begin(), segs.end(),
                         [](const Segment& a, const Segment& b) { return a.start_s < b.start_s; }));
    const auto again = label_segments(rec, spec);
    REQUIRE(again.size() == segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(again[i].start_s == segs[i].start_s);
      CHECK(again[i].label == segs[i].label);
      CHECK(max_abs_diff(again[i].data, segs[i].data) == 0.0);
    }
    auto premerged = rec;
    premerged.annotations = merged;
    CHECK(label_segments(premerged, spec).size() == segs.size());
  }

  SUBCASE("admission: four merged seizures pass the count filter") {
    const auto report = admit_patient({rec}, spec);
    CHECK(report.seizures == 4);
    CHECK(report.preictal == static_cast<std::size_t>(want.preictal));
    CHECK(report.admitted == (report.ratio > 2.0));
  }
}

TEST_CASE("admission filters") {
  DatasetSpec spec;
  const double hour = 3600.0;
  // Interictal stretch of x hours, then seizures hourly starting 4 h later,
  // ending 1 h after the last so no interictal time follows.
  auto patient = [&](int seizures, double x_hours) {
    const double first = (x_hours + 4) * hour;
    return blank(first + seizures * hour, spaced(seizures, first, hour));
  };
  SUBCASE("three seizures are not enough") {
    const auto r = admit_patient({patient(3, 17.15)}, spec);
    CHECK(!r.admitted);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].find("seizure count") != std::string::npos);
  }
  SUBCASE("ratio 1.5 is rejected") {
    const auto r = admit_patient({patient(4, 3.0)}, spec);
    CHECK(r.preictal == 240);
    CHECK(r.interictal == 360);
    CHECK(r.ratio == doctest::Approx(1.5));
    CHECK(!r.admitted);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].find("ratio") != std::string::npos);
  }
  SUBCASE("seven seizures at ratio 4.9 are admitted") {
    const auto r = admit_patient({patient(7, 17.15)}, spec);
    CHECK(r.seizures == 7);
    CHECK(r.preictal == 420);
    CHECK(r.interictal == 2058);
    CHECK(r.ratio == doctest::Approx(4.9));
    CHECK(r.seizures_per_day < 10);
    CHECK(r.admitted);
    CHECK(r.violations.empty());
  }
  SUBCASE("too many seizures per day") {
    // Eleven seizures 20 minutes apart inside one day.
    const auto rec = blank(24 * hour, spaced(11, 10 * hour, 1200));
    const auto r = admit_patient({rec}, spec);
    CHECK(r.seizures == 11);
    CHECK(!r.admitted);
    bool rate = false;
    for (const auto& v : r.violations) rate = rate || v.find("rate") != std::string::npos;
    CHECK(rate);
  }
  SUBCASE("recordings add up") {
    const auto r = admit_patient({patient(2, 10), patient(2, 10)}, spec);
    CHECK(r.seizures == 4);
    CHECK(r.preictal == 240);
  }
}

TEST_CASE("leave-one-seizure-out folds") {
  std::vector<Segment> segs;
  for (int i = 0; i < 100; ++i) {
    Segment s;
    s.data = Tensor(Shape{1, 2});
    s.start_s = i * 30.0;
    segs.push_back(s);
  }
  for (int z = 0; z < 4; ++z)
    for (int j = 0; j < 8; ++j) {
      Segment s;
      s.data = Tensor(Shape{1, 2});
      s.label = Label::kPreictal;
      s.seizure = z;
      s.start_s = 10000.0 + z * 1000 + j * 30;
      segs.push_back(s);
    }
  const auto folds = make_folds(segs, 4);
  REQUIRE(folds.size() == 4);
  std::vector<int> seen(segs.size(), 0);
  for (std::size_t f = 0; f < 4; ++f) {
    const auto& fold = folds[f];
    std::size_t inter = 0, pre = 0;
    for (auto i : fold.test) {
      ++seen[i];
      if (segs[i].preictal()) {
        ++pre;
        CHECK(segs[i].seizure == static_cast<int>(f));
      } else {
        ++inter;
        CHECK(i >= 25 * f);
        CHECK(i < 25 * (f + 1));
      }
    }
    CHECK(inter == 25);
    CHECK(pre == 8);
    std::set<std::size_t> all(fold.train.begin(), fold.train.end());
    for (auto i : fold.validation) CHECK(all.insert(i).second);
    for (auto i : fold.test) CHECK(all.insert(i).second);
    CHECK(all.size() == segs.size());
    // Validation is the later quarter of each training class.
    std::size_t v_inter = 0, v_pre = 0;
    for (auto v : fold.validation) {
      (segs[v].preictal() ? v_pre : v_inter)++;
      for (auto t : fold.train)
        if (segs[t].label == segs[v].label) CHECK(segs[t].start_s < segs[v].start_s);
    }
    CHECK(v_inter == 75 / 4);
    CHECK(v_pre == 24 / 4);
  }
  for (int s : seen) CHECK(s == 1);
  CHECK_THROWS_AS(make_folds(segs, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(segs, 3), std::invalid_argument);
  segs[0].synthetic = true;
  CHECK_THROWS_AS(make_folds(segs, 4), ProtocolError);
}
