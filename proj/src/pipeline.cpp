#include "diffeeg/pipeline.hpp"

#include <algorithm>
#include <stdexcept>

#include "diffeeg/errors.hpp"
#include "diffeeg/signal.hpp"

namespace diffeeg {

PatientData extract_patient(const std::vector<Recording>& recordings, const DatasetSpec& spec) {
  if (recordings.empty()) throw std::invalid_argument("extract_patient: no recordings");
  PatientData out;
  out.sample_rate = recordings.front().sample_rate;
  double offset = 0.0;
  for (const auto& rec : recordings) {
    if (rec.sample_rate != out.sample_rate || rec.channels() != recordings.front().channels()) {
      throw std::invalid_argument("extract_patient: recordings differ in sample rate or channel count");
    }
    auto segs = label_segments(rec, spec, static_cast<int>(out.onsets.size()));
    for (auto& s : segs) {
      s.data = normalize(s.data);
      s.start_s += offset;
      out.segments.push_back(std::move(s));
    }
    auto annotations = rec.annotations;
    for (auto& a : annotations) {
      a.onset_s += offset;
      a.offset_s += offset;
    }
    for (double onset : merged_onsets(std::move(annotations), spec)) out.onsets.push_back(onset);
    offset += rec.duration_s();
  }
  return out;
}

std::vector<double> merged_onsets(std::vector<Annotation> annotations, const DatasetSpec& spec) {
  std::sort(annotations.begin(), annotations.end(),
            [](const Annotation& a, const Annotation& b) { return a.onset_s < b.onset_s; });
  std::vector<double> onsets;
  for (const auto& a : merge_seizures(annotations, spec.merge_gap_minutes)) onsets.push_back(a.onset_s);
  return onsets;
}

void attach_seizures(std::vector<Segment>& segments, const std::vector<double>& onsets, double sample_rate,
                     const DatasetSpec& spec) {
  const double window = spec.preictal_minutes * 60.0;
  for (auto& s : segments) {
    if (!s.preictal()) continue;
    const double end = s.start_s + static_cast<double>(s.length()) / sample_rate;
    const auto it = std::lower_bound(onsets.begin(), onsets.end(), end - 1e-6);
    if (it == onsets.end() || *it - s.start_s > window + 1e-6) {
      throw FormatError("preictal segment at " + std::to_string(s.start_s) + " s has no seizure onset within " +
                        std::to_string(window) + " s after it");
    }
    s.seizure = static_cast<int>(it - onsets.begin());
  }
}

}  // namespace diffeeg
