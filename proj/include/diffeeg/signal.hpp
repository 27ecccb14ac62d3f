#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "diffeeg/rng.hpp"
#include "diffeeg/segment.hpp"
#include "diffeeg/tensor.hpp"

namespace diffeeg {

// STFT magnitudes, values is [bins x frames] with bins = window_len/2 + 1.
struct Spectrogram {
  ad::Tensor values;
  std::size_t window_len = 0;
  std::size_t hop = 0;

  std::size_t bins() const { return values.dim(0); }
  std::size_t frames() const { return values.dim(1); }
};

std::size_t stft_frames(std::size_t length, std::size_t window_len, std::size_t hop);

// Magnitude DFT of periodic-Hann-windowed frames starting at 0, hop, 2*hop, ...
Spectrogram stft_magnitude(std::span<const double> samples, std::size_t window_len, std::size_t hop);
// Mean of the per-channel magnitude spectrograms of a [H x L] segment.
Spectrogram stft_magnitude(const ad::Tensor& segment, std::size_t window_len, std::size_t hop);

// The diffusion conditioner: log(1 + mean magnitude).
Spectrogram conditioner(const ad::Tensor& segment, std::size_t window_len, std::size_t hop);

// Frame thirds [0, F/3), [F/3, 2F/3), [2F/3, F) taken from the three donors in
// a random order, one third from each.
Spectrogram recombine_spectrograms(const Spectrogram& a, const Spectrogram& b, const Spectrogram& c,
                                   Rng& rng);

// Per-channel zero mean and unit variance; constant channels become zero.
ad::Tensor normalize(const ad::Tensor& segment);

struct SyntheticProfile {
  std::size_t channels = 4;
  double sample_rate = 64.0;
  double background_hz = 10.0;
  double background_amp = 1.0;
  double pink_level = 1.0;
  double signature_hz = 3.0;
  double signature_amp = 1.5;
  // Signature amplitude grows linearly from floor*amp to amp over this span.
  double ramp_s = 1800.0;
  double ramp_floor = 0.3;
  double seizure_s = 60.0;
  double ictal_amp = 4.0;
  std::uint64_t seed = 0;
};

// Background rhythm plus pink noise everywhere; the signature term is added
// only inside [onset - ramp_s, onset) and a strong rhythm during seizures.
Recording synth_record(const SyntheticProfile& profile, double duration_s,
                       const std::vector<double>& seizure_onsets);

}  // namespace diffeeg
