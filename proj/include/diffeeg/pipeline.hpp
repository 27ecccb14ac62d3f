#pragma once

#include <vector>

#include "diffeeg/dataset.hpp"
#include "diffeeg/segment.hpp"

namespace diffeeg {

// One patient's labelled segments on a single timeline. Recordings are laid
// end to end, each shifted by the total duration of those before it, so
// segment starts and onsets are comparable across recordings.
struct PatientData {
  double sample_rate = 0.0;
  std::vector<Segment> segments;  // per-channel normalized, chronological
  std::vector<double> onsets;     // merged seizure onsets; index = Segment::seizure
};

// Recordings must share sample rate and channel count.
PatientData extract_patient(const std::vector<Recording>& recordings, const DatasetSpec& spec);

// Merged onsets of annotations on one timeline, in order.
std::vector<double> merged_onsets(std::vector<Annotation> annotations, const DatasetSpec& spec);

// Sets the seizure index of every preictal segment to the first onset at or
// after its end. Throws FormatError for a preictal segment with no onset
// within the preictal window after it.
void attach_seizures(std::vector<Segment>& segments, const std::vector<double>& onsets, double sample_rate,
                     const DatasetSpec& spec);

}  // namespace diffeeg
