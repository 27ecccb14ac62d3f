#include "diffeeg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "diffeeg/errors.hpp"

namespace diffeeg {

std::pair<std::size_t, std::size_t> class_counts(const std::vector<Segment>& segments) {
  std::size_t pre = 0;
  for (const auto& s : segments) pre += s.preictal() ? 1 : 0;
  return {segments.size() - pre, pre};
}

void DatasetSpec::validate() const {
  if (!(preictal_minutes > 0 && interictal_gap_hours > 0 && merge_gap_minutes > 0 && min_seizures > 0 &&
        max_seizures_per_day > 0 && min_inter_pre_ratio > 0 && segment_seconds > 0)) {
    throw std::invalid_argument("DatasetSpec: all fields must be positive");
  }
  if (interictal_gap_hours * 60.0 < preictal_minutes) {
    throw std::invalid_argument("DatasetSpec: interictal gap shorter than the preictal window");
  }
}

std::vector<Annotation> merge_seizures(const std::vector<Annotation>& sorted, double merge_gap_minutes) {
  std::vector<Annotation> out;
  const double gap = merge_gap_minutes * 60.0;
  for (const auto& a : sorted) {
    if (!out.empty() && a.onset_s < out.back().onset_s) {
      throw std::invalid_argument("merge_seizures: annotations must be sorted by onset");
    }
    if (!out.empty() && a.onset_s - out.back().offset_s < gap) {
      out.back().offset_s = std::max(out.back().offset_s, a.offset_s);
    } else {
      out.push_back(a);
    }
  }
  return out;
}

std::size_t segment_samples(double sample_rate, double segment_seconds) {
  const double n = sample_rate * segment_seconds;
  const double rounded = std::round(n);
  if (rounded < 1.0 || std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
    throw std::invalid_argument("segment of " + std::to_string(segment_seconds) + " s at " +
                                std::to_string(sample_rate) + " Hz is not a whole number of samples");
  }
  return static_cast<std::size_t>(rounded);
}

namespace {

Segment cut(const Recording& rec, std::size_t first, std::size_t len, Label label, int seizure) {
  Segment s;
  s.data = ad::Tensor(ad::Shape{rec.channels(), len});
  for (std::size_t c = 0; c < rec.channels(); ++c) {
    const auto src = rec.samples.row(c).subspan(first, len);
    std::copy(src.begin(), src.end(), s.data.row(c).begin());
  }
  s.label = label;
  s.record_id = rec.id;
  s.start_s = static_cast<double>(first) / rec.sample_rate;
  s.seizure = seizure;
  return s;
}

// First sample at or after time t.
std::size_t sample_at_or_after(double t, double fs) {
  return t <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t * fs - 1e-9));
}

// Last sample boundary at or before time t.
std::size_t sample_at_or_before(double t, double fs) {
  return t <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(t * fs + 1e-9));
}

}  // namespace

std::vector<Segment> label_segments(const Recording& rec, const DatasetSpec& spec, int first_seizure) {
  spec.validate();
  const std::size_t len = segment_samples(rec.sample_rate, spec.segment_seconds);
  const double fs = rec.sample_rate;
  const std::size_t total = rec.length();
  const auto seizures = merge_seizures(rec.annotations, spec.merge_gap_minutes);
  const double pre_s = spec.preictal_minutes * 60.0, gap_s = spec.interictal_gap_hours * 3600.0;

  struct Timed {
    std::size_t first;
    Label label;
    int seizure;
  };
  std::vector<Timed> picks;

  for (std::size_t i = 0; i < seizures.size(); ++i) {
    const std::size_t end = std::min(sample_at_or_before(seizures[i].onset_s, fs), total);
    double from = seizures[i].onset_s - pre_s;
    if (i > 0) from = std::max(from, seizures[i - 1].offset_s);
    const std::size_t begin = sample_at_or_after(from, fs);
    for (std::size_t stop = end; stop >= begin + len; stop -= len) {
      picks.push_back({stop - len, Label::kPreictal, first_seizure + static_cast<int>(i)});
    }
  }

  // Interictal regions: complement of [onset - gap, offset + gap].
  std::size_t cursor = 0;
  auto tile = [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s + len <= end; s += len) picks.push_back({s, Label::kInterictal, -1});
  };
  for (const auto& sz : seizures) {
    tile(cursor, std::min(sample_at_or_before(sz.onset_s - gap_s, fs), total));
    cursor = std::max(cursor, sample_at_or_after(sz.offset_s + gap_s, fs));
  }
  tile(cursor, total);

  std::sort(picks.begin(), picks.end(), [](const Timed& a, const Timed& b) { return a.first < b.first; });
  std::vector<Segment> out;
  out.reserve(picks.size());
  for (const auto& p : picks) out.push_back(cut(rec, p.first, len, p.label, p.seizure));
  return out;
}

AdmissionReport admit_patient(const std::vector<Recording>& recordings, const DatasetSpec& spec) {
  AdmissionReport r;
  int next_seizure = 0;
  for (const auto& rec : recordings) {
    const auto segments = label_segments(rec, spec, next_seizure);
    const auto merged = merge_seizures(rec.annotations, spec.merge_gap_minutes);
    next_seizure += static_cast<int>(merged.size());
    const auto [inter, pre] = class_counts(segments);
    r.interictal += inter;
    r.preictal += pre;
    r.days += rec.duration_s() / 86400.0;
  }
  r.seizures = next_seizure;
  r.seizures_per_day = r.days > 0 ? r.seizures / r.days : 0.0;
  r.ratio = r.preictal > 0 ? static_cast<double>(r.interictal) / static_cast<double>(r.preictal) : 0.0;
  if (r.seizures <= spec.min_seizures) {
    r.violations.push_back("seizure count " + std::to_string(r.seizures) + " not above " +
                           std::to_string(spec.min_seizures));
  }
  if (r.seizures_per_day >= spec.max_seizures_per_day) {
    r.violations.push_back("seizure rate " + std::to_string(r.seizures_per_day) + "/day not below " +
                           std::to_string(spec.max_seizures_per_day));
  }
  if (r.preictal == 0 || r.ratio <= spec.min_inter_pre_ratio) {
    r.violations.push_back("interictal:preictal ratio " + std::to_string(r.ratio) + " not above " +
                           std::to_string(spec.min_inter_pre_ratio));
  }
  r.admitted = r.violations.empty();
  return r;
}

namespace {

// Last quarter (at least one when two or more) of a chronological list.
std::size_t validation_count(std::size_t n) { return n < 2 ? 0 : std::max<std::size_t>(1, n / 4); }

}  // namespace

std::vector<Fold> make_folds(const std::vector<Segment>& segments, int n_seizures) {
  if (n_seizures < 2) throw std::invalid_argument("make_folds: need at least 2 seizures");
  const auto n = static_cast<std::size_t>(n_seizures);
  std::vector<std::size_t> interictal;
  std::vector<std::vector<std::size_t>> blocks(n);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.synthetic) throw ProtocolError("make_folds: synthetic segment in the source dataset");
    if (!s.preictal()) {
      interictal.push_back(i);
    } else {
      if (s.seizure < 0 || s.seizure >= n_seizures) {
        throw std::invalid_argument("make_folds: preictal segment has seizure index " + std::to_string(s.seizure) +
                                    " outside [0, " + std::to_string(n_seizures) + ")");
      }
      blocks[static_cast<std::size_t>(s.seizure)].push_back(i);
    }
  }
  auto chronological = [&](std::size_t a, std::size_t b) { return segments[a].start_s < segments[b].start_s; };
  std::stable_sort(interictal.begin(), interictal.end(), chronological);

  std::vector<Fold> folds(n);
  for (std::size_t f = 0; f < n; ++f) {
    const std::size_t lo = f * interictal.size() / n, hi = (f + 1) * interictal.size() / n;
    std::vector<std::size_t> train_inter, train_pre;
    for (std::size_t j = 0; j < interictal.size(); ++j) {
      (j >= lo && j < hi ? folds[f].test : train_inter).push_back(interictal[j]);
    }
    for (std::size_t b = 0; b < n; ++b) {
      auto& dest = b == f ? folds[f].test : train_pre;
      dest.insert(dest.end(), blocks[b].begin(), blocks[b].end());
    }
    std::stable_sort(train_pre.begin(), train_pre.end(), chronological);
    for (auto* cls : {&train_inter, &train_pre}) {
      const std::size_t v = validation_count(cls->size());
      folds[f].train.insert(folds[f].train.end(), cls->begin(), cls->end() - static_cast<std::ptrdiff_t>(v));
      folds[f].validation.insert(folds[f].validation.end(), cls->end() - static_cast<std::ptrdiff_t>(v), cls->end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    std::sort(folds[f].test.begin(), folds[f].test.end());
  }
  return folds;
}

Fold validation_split(const std::vector<Segment>& segments) {
  std::vector<std::size_t> inter, pre;
  for (std::size_t i = 0; i < segments.size(); ++i) (segments[i].preictal() ? pre : inter).push_back(i);
  auto chronological = [&](std::size_t a, std::size_t b) { return segments[a].start_s < segments[b].start_s; };
  Fold fold;
  for (auto* cls : {&inter, &pre}) {
    std::stable_sort(cls->begin(), cls->end(), chronological);
    const std::size_t v = validation_count(cls->size());
    fold.train.insert(fold.train.end(), cls->begin(), cls->end() - static_cast<std::ptrdiff_t>(v));
    fold.validation.insert(fold.validation.end(), cls->end() - static_cast<std::ptrdiff_t>(v), cls->end());
  }
  std::sort(fold.train.begin(), fold.train.end());
  std::sort(fold.validation.begin(), fold.validation.end());
  return fold;
}

std::map<std::string, std::vector<Annotation>> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open annotation file " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("record_id,onset_s,offset_s", 0) != 0) {
    throw FormatError(path + ": missing header record_id,onset_s,offset_s");
  }
  std::map<std::string, std::vector<Annotation>> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, onset, offset, extra;
    if (!std::getline(fields, id, ',') || !std::getline(fields, onset, ',') || !std::getline(fields, offset, ',') ||
        std::getline(fields, extra, ',')) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    Annotation a;
    try {
      std::size_t used = 0;
      a.onset_s = std::stod(onset, &used);
      if (used != onset.size()) throw std::invalid_argument(onset);
      a.offset_s = std::stod(offset, &used);
      if (used != offset.size()) throw std::invalid_argument(offset);
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad number");
    }
    if (a.offset_s < a.onset_s) throw FormatError(path + ":" + std::to_string(lineno) + ": offset before onset");
    out[id].push_back(a);
  }
  for (auto& [id, list] : out) {
    std::sort(list.begin(), list.end(), [](const Annotation& a, const Annotation& b) { return a.onset_s < b.onset_s; });
  }
  return out;
}

void write_annotations(const std::string& path, const std::map<std::string, std::vector<Annotation>>& annotations) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "record_id,onset_s,offset_s\n";
  out.precision(17);
  for (const auto& [id, list] : annotations)
    for (const auto& a : list) out << id << ',' << a.onset_s << ',' << a.offset_s << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace diffeeg
