#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "diffeeg/tensor.hpp"

namespace diffeeg {

enum class Label : unsigned char { kInterictal = 0, kPreictal = 1 };

struct Annotation {
  double onset_s = 0.0;
  double offset_s = 0.0;
};

// Continuous multichannel recording; samples is [channels x total].
struct Recording {
  std::string id;
  double sample_rate = 0.0;
  ad::Tensor samples;
  std::vector<Annotation> annotations;  // sorted, non-overlapping

  std::size_t channels() const { return samples.empty() ? 0 : samples.dim(0); }
  std::size_t length() const { return samples.empty() ? 0 : samples.dim(1); }
  double duration_s() const { return sample_rate > 0 ? static_cast<double>(length()) / sample_rate : 0.0; }
};

// One fixed-length window [channels x L] with its class.
struct Segment {
  ad::Tensor data;
  Label label = Label::kInterictal;
  std::string record_id;
  double start_s = 0.0;
  bool synthetic = false;
  // Index of the (merged) seizure a preictal segment precedes; -1 otherwise.
  int seizure = -1;

  bool preictal() const { return label == Label::kPreictal; }
  std::size_t channels() const { return data.dim(0); }
  std::size_t length() const { return data.dim(1); }
};

// Counts of (interictal, preictal) segments.
std::pair<std::size_t, std::size_t> class_counts(const std::vector<Segment>& segments);

}  // namespace diffeeg
