#include "diffeeg/balance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "diffeeg/parallel.hpp"
#include "diffeeg/signal.hpp"

namespace diffeeg {

using ad::Shape;
using ad::Tensor;

std::string_view to_string(BalanceMethod m) {
  switch (m) {
    case BalanceMethod::kDownsample: return "downsample";
    case BalanceMethod::kSlidingWindow: return "sliding";
    case BalanceMethod::kRecombine: return "recombine";
    case BalanceMethod::kDiffusion: return "diffusion";
  }
  return "unknown";
}

BalanceMethod parse_balance_method(std::string_view name) {
  for (auto m : {BalanceMethod::kDownsample, BalanceMethod::kSlidingWindow, BalanceMethod::kRecombine,
                 BalanceMethod::kDiffusion}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown balance method '" + std::string(name) +
                              "' (expected downsample, sliding, recombine or diffusion)");
}

namespace {

std::vector<std::size_t> indices_of(const std::vector<Segment>& segs, bool preictal) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (segs[i].preictal() == preictal) out.push_back(i);
  return out;
}

// k distinct values from [0, n), in increasing order.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n) - 1));
    std::swap(all[i], all[j]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

// Keeps all preictal and `keep` randomly chosen interictal segments.
std::vector<Segment> thin_interictal(const std::vector<Segment>& segs, std::size_t keep, Rng& rng) {
  const auto inter = indices_of(segs, false);
  if (keep > inter.size()) throw std::invalid_argument("cannot keep more interictal segments than exist");
  std::vector<bool> kept(segs.size(), true);
  for (auto i : inter) kept[i] = false;
  for (auto k : choose(inter.size(), keep, rng)) kept[inter[k]] = true;
  std::vector<Segment> out;
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (kept[i]) out.push_back(segs[i]);
  return out;
}

}  // namespace

std::vector<Segment> downsample(const std::vector<Segment>& train, Rng& rng) {
  const auto [inter, pre] = class_counts(train);
  if (pre > inter) {
    throw std::invalid_argument("downsample: more preictal (" + std::to_string(pre) + ") than interictal (" +
                                std::to_string(inter) + ") segments");
  }
  return thin_interictal(train, pre, rng);
}

std::size_t sliding_window_count(double span_s, double window_s, double stride_s) {
  if (!(stride_s > 0.0) || !(window_s > 0.0)) throw std::invalid_argument("sliding windows need positive W and S");
  if (window_s > span_s + 1e-9) return 0;
  return static_cast<std::size_t>(std::floor((span_s - window_s) / stride_s + 1e-9)) + 1;
}

std::vector<Tensor> sliding_windows(const Tensor& region, double fs, double window_s, double stride_s) {
  const std::size_t span = region.dim(1);
  const std::size_t count = sliding_window_count(static_cast<double>(span) / fs, window_s, stride_s);
  const auto win = static_cast<std::size_t>(std::llround(window_s * fs));
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < count; ++k) {
    const auto first = static_cast<std::size_t>(std::llround(static_cast<double>(k) * stride_s * fs));
    if (first + win > span) break;
    Tensor w(Shape{region.dim(0), win});
    for (std::size_t c = 0; c < region.dim(0); ++c) {
      const auto src = region.row(c).subspan(first, win);
      std::copy(src.begin(), src.end(), w.row(c).begin());
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<PreictalRegion> preictal_regions(const std::vector<Segment>& segments, double fs) {
  std::vector<const Segment*> pre;
  for (const auto& s : segments)
    if (s.preictal() && !s.synthetic) pre.push_back(&s);
  std::stable_sort(pre.begin(), pre.end(), [](const Segment* a, const Segment* b) {
    return a->seizure != b->seizure ? a->seizure < b->seizure : a->start_s < b->start_s;
  });
  std::vector<PreictalRegion> out;
  std::vector<const Segment*> run;
  auto flush = [&] {
    if (run.empty()) return;
    const std::size_t h = run.front()->channels(), len = run.front()->length();
    PreictalRegion r{run.front()->seizure, run.front()->start_s, Tensor(Shape{h, len * run.size()})};
    for (std::size_t k = 0; k < run.size(); ++k)
      for (std::size_t c = 0; c < h; ++c) {
        const auto src = run[k]->data.row(c);
        std::copy(src.begin(), src.end(), r.signal.row(c).begin() + static_cast<std::ptrdiff_t>(k * len));
      }
    out.push_back(std::move(r));
    run.clear();
  };
  for (const Segment* s : pre) {
    if (!run.empty()) {
      const Segment* last = run.back();
      const double expected = last->start_s + static_cast<double>(last->length()) / fs;
      if (s->seizure != last->seizure || std::abs(s->start_s - expected) > 0.5 / fs) flush();
    }
    run.push_back(s);
  }
  flush();
  return out;
}

std::vector<Segment> recombine(const std::vector<Segment>& pool, Rng& rng, std::size_t count) {
  if (pool.empty()) throw std::invalid_argument("recombine: empty donor pool");
  const std::size_t h = pool.front().channels(), len = pool.front().length();
  for (const auto& s : pool)
    if (s.data.shape() != pool.front().data.shape()) throw std::invalid_argument("recombine: donor shapes differ");
  const std::array<std::size_t, 4> cuts{0, len / 3, 2 * len / 3, len};
  std::vector<Segment> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::array<std::size_t, 3> donors{};
    if (pool.size() >= 3) {
      const auto picked = choose(pool.size(), 3, rng);
      std::copy(picked.begin(), picked.end(), donors.begin());
      std::shuffle(donors.begin(), donors.end(), rng.engine());
    } else {
      for (auto& d : donors) d = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
    }
    Segment s = pool[donors[0]];
    s.synthetic = true;
    for (std::size_t part = 1; part < 3; ++part) {
      const auto& src = pool[donors[part]].data;
      for (std::size_t c = 0; c < h; ++c)
        for (std::size_t l = cuts[part]; l < cuts[part + 1]; ++l) s.data.at(c, l) = src.at(c, l);
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

// Preictal segments grouped by seizure, in input order.
std::map<int, std::vector<const Segment*>> pools_by_seizure(const std::vector<Segment>& train) {
  std::map<int, std::vector<const Segment*>> pools;
  for (const auto& s : train)
    if (s.preictal()) pools[s.seizure].push_back(&s);
  return pools;
}

const Segment& random_preictal(const std::vector<Segment>& train, const std::vector<std::size_t>& pre, Rng& rng) {
  return train[pre[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pre.size()) - 1))]];
}

}  // namespace

std::vector<Segment> generate_preictal(const std::vector<Segment>& train, const DiffusionSource& source, Rng& rng,
                                       std::size_t deficit) {
  if (!source.model) throw std::invalid_argument("generate_preictal: no trained model (missing checkpoint)");
  const auto pre = indices_of(train, true);
  if (deficit == 0) return {};
  if (pre.empty()) throw std::invalid_argument("generate_preictal: no preictal segments to condition on");
  const std::size_t from_random = (deficit + 1) / 2;
  const auto pools = pools_by_seizure(train);

  // Conditioners are drawn sequentially so they do not depend on jobs.
  struct Job {
    Spectrogram cond;
    const Segment* donor;
  };
  std::vector<Job> jobs;
  jobs.reserve(deficit);
  for (std::size_t k = 0; k < deficit; ++k) {
    const Segment& donor = random_preictal(train, pre, rng);
    if (k < from_random) {
      jobs.push_back({conditioner(donor.data, source.stft_window, source.stft_hop), &donor});
    } else {
      const auto& pool = pools.at(donor.seizure);
      std::array<Spectrogram, 3> specs;
      for (auto& s : specs) {
        const auto* d = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
        s = conditioner(d->data, source.stft_window, source.stft_hop);
      }
      jobs.push_back({recombine_spectrograms(specs[0], specs[1], specs[2], rng), &donor});
    }
  }
  const Rng streams = rng.split("generate");
  std::vector<Segment> out(deficit);
  parallel_for(deficit, source.jobs, [&](std::size_t k) {
    Rng z = streams.split("sample", k);
    const Segment& donor = *jobs[k].donor;
    Segment s;
    s.data = sample(*source.model, jobs[k].cond, source.schedule, z, donor.channels(), donor.length());
    s.label = Label::kPreictal;
    s.synthetic = true;
    s.record_id = donor.record_id;
    s.start_s = donor.start_s;
    s.seizure = donor.seizure;
    out[k] = std::move(s);
  });
  return out;
}

std::vector<Segment> diffusion_augment(const std::vector<Segment>& train, const DiffusionSource& source, Rng& rng) {
  const auto [n_inter, n_pre] = class_counts(train);
  return generate_preictal(train, source, rng, n_inter > n_pre ? n_inter - n_pre : 0);
}

std::vector<Segment> balance(const std::vector<Segment>& train, const BalancePlan& plan, double fs, Rng& rng,
                             const DiffusionSource* source) {
  const auto [n_inter, n_pre] = class_counts(train);
  if (n_pre == 0 || n_inter == 0) throw std::invalid_argument("balance: training set lacks a class");
  std::vector<Segment> out = train;
  switch (plan.method) {
    case BalanceMethod::kDownsample:
      return downsample(train, rng);
    case BalanceMethod::kSlidingWindow: {
      if (n_pre >= n_inter) return downsample(train, rng);
      std::vector<Segment> extra;
      const double seg_s = static_cast<double>(train.front().length()) / fs;
      if (std::abs(plan.window_s - seg_s) > 1e-9) {
        throw std::invalid_argument("sliding windows: window " + std::to_string(plan.window_s) +
                                    " s differs from the segment length " + std::to_string(seg_s) + " s");
      }
      for (const auto& region : preictal_regions(train, fs)) {
        const auto windows = sliding_windows(region.signal, fs, plan.window_s, plan.stride_s);
        for (std::size_t k = 0; k < windows.size(); ++k) {
          const double offset = static_cast<double>(k) * plan.stride_s;
          // Offsets on the segment grid reproduce existing segments.
          const double grid = offset / seg_s;
          if (std::abs(grid - std::round(grid)) < 1e-9) continue;
          Segment s;
          s.data = windows[k];
          s.label = Label::kPreictal;
          s.synthetic = true;
          s.seizure = region.seizure;
          s.start_s = region.start_s + offset;
          extra.push_back(std::move(s));
        }
      }
      const std::size_t deficit = n_inter - n_pre;
      if (extra.size() >= deficit) {
        for (auto k : choose(extra.size(), deficit, rng)) out.push_back(extra[k]);
        return out;
      }
      out.insert(out.end(), extra.begin(), extra.end());
      return thin_interictal(out, n_pre + extra.size(), rng);
    }
    case BalanceMethod::kRecombine: {
      if (n_pre >= n_inter) return downsample(train, rng);
      const auto pre = indices_of(train, true);
      const auto pools = pools_by_seizure(train);
      for (std::size_t k = 0; k < n_inter - n_pre; ++k) {
        const auto& donor = random_preictal(train, pre, rng);
        std::vector<Segment> pool;
        for (const auto* s : pools.at(donor.seizure)) pool.push_back(*s);
        auto made = recombine(pool, rng, 1);
        out.push_back(std::move(made.front()));
      }
      return out;
    }
    case BalanceMethod::kDiffusion: {
      if (!source) throw std::invalid_argument("balance: diffusion method needs a trained model (missing checkpoint)");
      if (n_pre >= n_inter) return downsample(train, rng);
      auto made = diffusion_augment(train, *source, rng);
      out.insert(out.end(), std::make_move_iterator(made.begin()), std::make_move_iterator(made.end()));
      return out;
    }
  }
  return out;
}

}  // namespace diffeeg
