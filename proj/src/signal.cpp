#include "diffeeg/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace diffeeg {

using ad::Shape;
using ad::Tensor;

std::size_t stft_frames(std::size_t length, std::size_t window_len, std::size_t hop) {
  if (window_len == 0 || hop == 0) throw std::invalid_argument("stft: window and hop must be positive");
  if (window_len > length) {
    throw std::invalid_argument("stft: window " + std::to_string(window_len) +
                                " longer than signal " + std::to_string(length));
  }
  return (length - window_len) / hop + 1;
}

namespace {

struct DftTable {
  std::vector<double> window, cos, sin;  // cos/sin are [bins x window_len]
};

DftTable make_table(std::size_t n) {
  const std::size_t bins = n / 2 + 1;
  DftTable t;
  t.window.resize(n);
  t.cos.resize(bins * n);
  t.sin.resize(bins * n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) t.window[i] = 0.5 - 0.5 * std::cos(two_pi * i / n);
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      // Reduce k*i mod n first so large windows keep full phase precision.
      const double phase = two_pi * static_cast<double>((k * i) % n) / n;
      t.cos[k * n + i] = std::cos(phase);
      t.sin[k * n + i] = std::sin(phase);
    }
  }
  return t;
}

void accumulate_stft(std::span<const double> x, const DftTable& table, std::size_t hop, double weight,
                     Tensor& out) {
  const std::size_t n = table.window.size(), bins = out.dim(0), frames = out.dim(1);
  std::vector<double> frame(n);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = x.data() + f * hop;
    for (std::size_t i = 0; i < n; ++i) frame[i] = src[i] * table.window[i];
    for (std::size_t k = 0; k < bins; ++k) {
      const double* c = table.cos.data() + k * n;
      const double* s = table.sin.data() + k * n;
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        re += frame[i] * c[i];
        im -= frame[i] * s[i];
      }
      out.at(k, f) += weight * std::hypot(re, im);
    }
  }
}

}  // namespace

Spectrogram stft_magnitude(std::span<const double> samples, std::size_t window_len, std::size_t hop) {
  const std::size_t frames = stft_frames(samples.size(), window_len, hop);
  Spectrogram s{Tensor(Shape{window_len / 2 + 1, frames}), window_len, hop};
  accumulate_stft(samples, make_table(window_len), hop, 1.0, s.values);
  return s;
}

Spectrogram stft_magnitude(const Tensor& segment, std::size_t window_len, std::size_t hop) {
  if (segment.rank() != 2) throw std::invalid_argument("stft: segment must be [channels x samples]");
  const std::size_t frames = stft_frames(segment.dim(1), window_len, hop);
  Spectrogram s{Tensor(Shape{window_len / 2 + 1, frames}), window_len, hop};
  const auto table = make_table(window_len);
  const double weight = 1.0 / static_cast<double>(segment.dim(0));
  for (std::size_t c = 0; c < segment.dim(0); ++c) accumulate_stft(segment.row(c), table, hop, weight, s.values);
  return s;
}

Spectrogram conditioner(const Tensor& segment, std::size_t window_len, std::size_t hop) {
  auto s = stft_magnitude(segment, window_len, hop);
  for (auto& v : s.values.values()) v = std::log1p(v);
  return s;
}

Spectrogram recombine_spectrograms(const Spectrogram& a, const Spectrogram& b, const Spectrogram& c,
                                   Rng& rng) {
  if (!a.values.same_shape(b.values) || !a.values.same_shape(c.values) || a.hop != b.hop ||
      a.hop != c.hop || a.window_len != b.window_len || a.window_len != c.window_len) {
    throw std::invalid_argument("recombine_spectrograms: donors differ in geometry");
  }
  std::array<const Spectrogram*, 3> donors{&a, &b, &c};
  std::shuffle(donors.begin(), donors.end(), rng.engine());
  const std::size_t frames = a.frames(), bins = a.bins();
  const std::array<std::size_t, 4> cuts{0, frames / 3, 2 * frames / 3, frames};
  Spectrogram out{Tensor(a.values.shape()), a.window_len, a.hop};
  for (std::size_t part = 0; part < 3; ++part) {
    for (std::size_t k = 0; k < bins; ++k) {
      for (std::size_t f = cuts[part]; f < cuts[part + 1]; ++f) out.values.at(k, f) = donors[part]->values.at(k, f);
    }
  }
  return out;
}

Tensor normalize(const Tensor& segment) {
  if (segment.rank() != 2) throw std::invalid_argument("normalize: segment must be [channels x samples]");
  Tensor out(segment.shape());
  const std::size_t n = segment.dim(1);
  for (std::size_t c = 0; c < segment.dim(0); ++c) {
    const auto x = segment.row(c);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    auto y = out.row(c);
    if (sd <= 1e-12 * (1.0 + std::abs(mean))) continue;
    for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) / sd;
  }
  return out;
}

namespace {

// Paul Kellet's economy 1/f filter on white noise.
class PinkFilter {
 public:
  double next(double white) {
    b_[0] = 0.99886 * b_[0] + white * 0.0555179;
    b_[1] = 0.99332 * b_[1] + white * 0.0750759;
    b_[2] = 0.96900 * b_[2] + white * 0.1538520;
    b_[3] = 0.86650 * b_[3] + white * 0.3104856;
    b_[4] = 0.55000 * b_[4] + white * 0.5329522;
    b_[5] = -0.7616 * b_[5] - white * 0.0168980;
    const double out = b_[0] + b_[1] + b_[2] + b_[3] + b_[4] + b_[5] + b_[6] + white * 0.5362;
    b_[6] = white * 0.115926;
    return out * 0.11;
  }

 private:
  std::array<double, 7> b_{};
};

}  // namespace

Recording synth_record(const SyntheticProfile& p, double duration_s, const std::vector<double>& onsets) {
  if (p.channels == 0 || !(p.sample_rate > 0.0) || !(duration_s > 0.0)) {
    throw std::invalid_argument("synth_record: channels, sample rate and duration must be positive");
  }
  if (!std::is_sorted(onsets.begin(), onsets.end())) {
    throw std::invalid_argument("synth_record: seizure onsets must be sorted");
  }
  for (double o : onsets) {
    if (o < 0.0 || o >= duration_s) {
      throw std::invalid_argument("synth_record: onset " + std::to_string(o) + " outside the recording");
    }
  }
  const auto total = static_cast<std::size_t>(std::floor(duration_s * p.sample_rate));
  Recording rec;
  rec.id = "synthetic-" + std::to_string(p.seed);
  rec.sample_rate = p.sample_rate;
  rec.samples = Tensor(Shape{p.channels, total});
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    double offset = std::min(onsets[i] + p.seizure_s, duration_s);
    if (i + 1 < onsets.size()) offset = std::min(offset, onsets[i + 1]);
    rec.annotations.push_back({onsets[i], offset});
  }

  const Rng root(p.seed);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t c = 0; c < p.channels; ++c) {
    Rng noise = root.split("pink", c);
    Rng phases = root.split("phase", c);
    const double bg_phase = two_pi * phases.uniform();
    const double mod_phase = two_pi * phases.uniform();
    const double sig_phase = two_pi * phases.uniform();
    // Focal signature: strongest on channel 0, half strength on the last.
    const double focal = p.channels == 1 ? 1.0 : 1.0 - 0.5 * static_cast<double>(c) / (p.channels - 1);
    PinkFilter pink;
    auto row = rec.samples.row(c);
    std::size_t next_seizure = 0;
    for (std::size_t i = 0; i < total; ++i) {
      const double t = static_cast<double>(i) / p.sample_rate;
      const double envelope = 1.0 + 0.3 * std::sin(two_pi * 0.01 * t + mod_phase);
      double v = p.background_amp * envelope * std::sin(two_pi * p.background_hz * t + bg_phase) +
                 p.pink_level * pink.next(noise.normal());
      while (next_seizure < rec.annotations.size() && t >= rec.annotations[next_seizure].offset_s) ++next_seizure;
      if (next_seizure < rec.annotations.size()) {
        const auto& sz = rec.annotations[next_seizure];
        const double carrier = std::sin(two_pi * p.signature_hz * t + sig_phase);
        if (t >= sz.onset_s) {
          v += p.ictal_amp * carrier;
        } else if (p.ramp_s > 0.0 && t >= sz.onset_s - p.ramp_s) {
          const double progress = 1.0 - (sz.onset_s - t) / p.ramp_s;
          v += focal * p.signature_amp * (p.ramp_floor + (1.0 - p.ramp_floor) * progress) * carrier;
        }
      }
      row[i] = v;
    }
  }
  return rec;
}

}  // namespace diffeeg
