#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "diffeeg/diffusion.hpp"
#include "diffeeg/rng.hpp"
#include "diffeeg/schedule.hpp"
#include "diffeeg/segment.hpp"

namespace diffeeg {

enum class BalanceMethod { kDownsample, kSlidingWindow, kRecombine, kDiffusion };

std::string_view to_string(BalanceMethod m);
// Accepts downsample, sliding, recombine, diffusion.
BalanceMethod parse_balance_method(std::string_view name);

struct BalancePlan {
  BalanceMethod method = BalanceMethod::kDownsample;
  double window_s = 30.0;
  double stride_s = 5.0;
  std::string checkpoint;
  std::uint64_t seed = 0;
};

// Uniform pick of |preictal| interictal segments without replacement;
// preictal and the relative order of kept segments are unchanged.
std::vector<Segment> downsample(const std::vector<Segment>& train, Rng& rng);

// Window count floor((span - W)/S) + 1, or 0 when W exceeds the span.
std::size_t sliding_window_count(double span_s, double window_s, double stride_s);

// Windows of window_s seconds at offsets 0, S, 2S, ... of a [H x span] signal.
std::vector<ad::Tensor> sliding_windows(const ad::Tensor& region, double sample_rate, double window_s,
                                        double stride_s);

// A contiguous stretch of preictal signal rebuilt from abutting segments.
struct PreictalRegion {
  int seizure = -1;
  double start_s = 0.0;
  ad::Tensor signal;  // [H x span]
};

// Chains preictal segments of the same seizure whose windows abut in time.
std::vector<PreictalRegion> preictal_regions(const std::vector<Segment>& segments, double sample_rate);

// Sample i of the output takes thirds [0, L/3), [L/3, 2L/3), [2L/3, L) from
// three donors of the pool, distinct when the pool has three or more.
std::vector<Segment> recombine(const std::vector<Segment>& pool, Rng& rng, std::size_t count);

// Generator inputs for diffusion balancing.
struct DiffusionSource {
  const NoiseModel* model = nullptr;
  Schedule schedule = linear_schedule(ScheduleConfig{});
  std::size_t stft_window = 32;
  std::size_t stft_hop = 32;
  unsigned jobs = 1;
};

// Generates count synthetic preictal segments: the first ceil half
// conditioned on spectrograms of random real preictal segments of train, the
// rest on spectrograms recombined from three segments of one seizure.
std::vector<Segment> generate_preictal(const std::vector<Segment>& train, const DiffusionSource& source, Rng& rng,
                                       std::size_t count);

// generate_preictal with count = |interictal| - |preictal|.
std::vector<Segment> diffusion_augment(const std::vector<Segment>& train, const DiffusionSource& source, Rng& rng);

// Applies the plan; every method returns a set with equal class counts.
// Sliding windows fall back to downsampling interictal data when the
// available windows cannot cover the deficit.
std::vector<Segment> balance(const std::vector<Segment>& train, const BalancePlan& plan, double sample_rate,
                             Rng& rng, const DiffusionSource* source = nullptr);

}  // namespace diffeeg
