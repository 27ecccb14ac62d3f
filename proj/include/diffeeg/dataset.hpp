#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "diffeeg/segment.hpp"

namespace diffeeg {

struct DatasetSpec {
  double preictal_minutes = 30.0;
  double interictal_gap_hours = 4.0;
  double merge_gap_minutes = 15.0;
  // Admission needs strictly more seizures than this.
  int min_seizures = 3;
  // Admission needs strictly fewer seizures per day than this.
  double max_seizures_per_day = 10.0;
  // Admission needs an interictal:preictal segment ratio strictly above this.
  double min_inter_pre_ratio = 2.0;
  double segment_seconds = 30.0;

  void validate() const;
};

// Seizures starting less than merge_gap after the previous (merged) seizure's
// end are absorbed into it: leading onset, last offset.
std::vector<Annotation> merge_seizures(const std::vector<Annotation>& sorted, double merge_gap_minutes);

// Samples per segment; throws if segment_seconds * fs is not integral.
std::size_t segment_samples(double sample_rate, double segment_seconds);

// Merges the recording's seizures, then tiles
//   preictal:   backward from each onset over [onset - preictal, onset), never
//               reaching back past the previous seizure's end;
//   interictal: forward over time at least interictal_gap from any seizure.
// Partial windows are dropped; everything else is discarded. Output is in
// chronological order and preictal segments carry their merged seizure index
// (offset by first_seizure).
std::vector<Segment> label_segments(const Recording& rec, const DatasetSpec& spec, int first_seizure = 0);

struct AdmissionReport {
  bool admitted = false;
  int seizures = 0;
  double days = 0.0;
  double seizures_per_day = 0.0;
  std::size_t interictal = 0;
  std::size_t preictal = 0;
  double ratio = 0.0;
  std::vector<std::string> violations;
};

AdmissionReport admit_patient(const std::vector<Recording>& recordings, const DatasetSpec& spec);

// Indices into the segment list a fold uses.
struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Leave-one-seizure-out folds: fold i tests seizure i's preictal block and the
// i-th of n_seizures contiguous chronological interictal parts. Of the rest,
// the chronologically last quarter of each class is validation.
std::vector<Fold> make_folds(const std::vector<Segment>& segments, int n_seizures);

// The fold validation rule on a whole set: the chronologically last quarter
// of each class is held out. test stays empty.
Fold validation_split(const std::vector<Segment>& segments);

// Text CSV with header `record_id,onset_s,offset_s`.
std::map<std::string, std::vector<Annotation>> read_annotations(const std::string& path);
void write_annotations(const std::string& path, const std::map<std::string, std::vector<Annotation>>& annotations);

}  // namespace diffeeg
