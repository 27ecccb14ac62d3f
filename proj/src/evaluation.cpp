#include "diffeeg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "diffeeg/dataset.hpp"
#include "diffeeg/errors.hpp"
#include "diffeeg/parallel.hpp"
#include "diffeeg/signal.hpp"

namespace diffeeg {

void AlarmPolicy::validate() const {
  if (k < 1 || k > n) throw std::invalid_argument("AlarmPolicy: need 1 <= k <= n");
  if (!(sop_s > 0.0) || sph_s < 0.0 || refractory_s < 0.0) {
    throw std::invalid_argument("AlarmPolicy: sop must be positive, sph and refractory non-negative");
  }
}

std::vector<Alarm> raise_alarms(const PredictionTimeline& tl, const AlarmPolicy& policy) {
  policy.validate();
  std::vector<Alarm> alarms;
  std::deque<bool> window;
  int positives = 0;
  for (std::size_t i = 0; i < tl.entries.size(); ++i) {
    const auto& e = tl.entries[i];
    if (i > 0) {
      const double gap = e.start_s - tl.entries[i - 1].start_s;
      if (!(gap > 0.0)) throw std::invalid_argument("raise_alarms: start times must strictly increase");
      if (gap > 1.5 * tl.stride_s) {
        window.clear();
        positives = 0;
      }
    }
    window.push_back(e.decision);
    positives += e.decision ? 1 : 0;
    if (window.size() > static_cast<std::size_t>(policy.n)) {
      positives -= window.front() ? 1 : 0;
      window.pop_front();
    }
    const double t = e.start_s + tl.stride_s;
    if (e.decision && positives >= policy.k && (alarms.empty() || t - alarms.back().time_s >= policy.refractory_s)) {
      alarms.push_back({i, t, e.preictal});
    }
  }
  return alarms;
}

FoldReport score_fold(const std::vector<Alarm>& alarms, const std::vector<double>& onsets, double interictal_hours,
                      const AlarmPolicy& policy) {
  if (onsets.empty()) throw std::invalid_argument("score_fold: no test seizures");
  FoldReport r;
  r.alarms = alarms;
  r.interictal_hours = interictal_hours;
  r.predicted.assign(onsets.size(), false);
  for (const auto& a : alarms) {
    bool hit = false;
    for (std::size_t j = 0; j < onsets.size(); ++j) {
      if (onsets[j] >= a.time_s + policy.sph_s && onsets[j] <= a.time_s + policy.sph_s + policy.sop_s) {
        r.predicted[j] = true;
        hit = true;
      }
    }
    if (!hit && !a.during_preictal) ++r.false_alarms;
  }
  const auto hits = std::count(r.predicted.begin(), r.predicted.end(), true);
  r.sens_percent = 100.0 * static_cast<double>(hits) / static_cast<double>(onsets.size());
  if (interictal_hours <= 0.0) {
    if (r.false_alarms > 0) throw std::invalid_argument("score_fold: false alarms without interictal test time");
    r.fpr_per_hour = 0.0;
  } else {
    r.fpr_per_hour = static_cast<double>(r.false_alarms) / interictal_hours;
  }
  return r;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0 && labels[order[k]] != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("auc: both classes must be present");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

namespace {

std::vector<Segment> pick(const std::vector<Segment>& segs, const std::vector<std::size_t>& idx) {
  std::vector<Segment> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(segs[i]);
  return out;
}

Scorer default_fit(const ClassifierConfig& config, const FitOptions& base, const std::vector<Segment>& train,
                   const std::vector<Segment>& validation, std::uint64_t seed) {
  std::shared_ptr<Classifier> clf = make_classifier(config, seed);
  FitOptions opts = base;
  opts.seed = Rng(seed).split("fit").seed();
  fit(*clf, train, validation, opts);
  return [clf](const ad::Tensor& x) { return clf->classify(x); };
}

struct FoldOutcome {
  std::vector<FoldReport> per_classifier;
};

FoldOutcome run_fold(const std::vector<Segment>& segments, const Fold& fold, std::size_t f,
                     const std::vector<double>& onsets, const CvOptions& opts) {
  auto log = [&](const std::string& msg) {
    if (opts.log) opts.log("fold " + std::to_string(f) + ": " + msg);
  };
  const auto train = pick(segments, fold.train);
  const auto validation = pick(segments, fold.validation);
  const auto test = pick(segments, fold.test);
  for (const auto& s : test) {
    if (s.synthetic) throw ProtocolError("synthetic segment in the test set of fold " + std::to_string(f));
  }
  const auto [test_inter, test_pre] = class_counts(test);
  if (test_inter == 0 || test_pre == 0) {
    throw ProtocolError("fold " + std::to_string(f) + " test set has a single class (" + std::to_string(test_inter) +
                        " interictal, " + std::to_string(test_pre) + " preictal)");
  }
  const auto [train_inter, train_pre] = class_counts(train);
  if (train_inter == 0 || train_pre == 0) {
    throw ProtocolError("fold " + std::to_string(f) + " training set has a single class");
  }

  const Rng fold_rng = Rng(opts.seed).split("fold", f);
  std::unique_ptr<EpsNet> net;
  DiffusionSource source;
  if (opts.plan.method == BalanceMethod::kDiffusion) {
    const auto& first = train.front();
    EpsNetConfig cfg = opts.diffusion.net;
    cfg.input_channels = first.channels();
    cfg.segment_length = first.length();
    cfg.cond_bins = opts.diffusion.stft_window / 2 + 1;
    cfg.cond_frames = stft_frames(first.length(), opts.diffusion.stft_window, opts.diffusion.stft_hop);
    net = std::make_unique<EpsNet>(cfg, fold_rng.split("epsnet").seed());
    std::vector<TrainingExample> data;
    for (const auto& s : train) {
      if (s.preictal()) data.push_back({s.data, conditioner(s.data, opts.diffusion.stft_window, opts.diffusion.stft_hop)});
    }
    TrainOptions topts = opts.diffusion.train;
    topts.seed = fold_rng.split("diffusion").seed();
    const auto schedule = linear_schedule(opts.diffusion.schedule);
    const auto state = diffeeg::train(data, *net, schedule, topts);
    log("diffusion trained on " + std::to_string(data.size()) + " preictal segments, final loss " +
        std::to_string(state.losses.empty() ? 0.0 : state.losses.back()));
    source.model = net.get();
    source.schedule = schedule;
    source.stft_window = opts.diffusion.stft_window;
    source.stft_hop = opts.diffusion.stft_hop;
  }
  Rng balance_rng = fold_rng.split("balance");
  auto balanced = balance(train, opts.plan, opts.sample_rate, balance_rng, net ? &source : nullptr);
  // Real segments arrive normalized; generated ones are brought to the same range.
  for (auto& s : balanced)
    if (s.synthetic) s.data = normalize(s.data);
  const auto [bal_inter, bal_pre] = class_counts(balanced);
  log(std::string(to_string(opts.plan.method)) + " balanced " + std::to_string(train_inter) + "/" +
      std::to_string(train_pre) + " -> " + std::to_string(bal_inter) + "/" + std::to_string(bal_pre));

  std::vector<double> fold_onsets;
  for (const auto& s : test)
    if (s.preictal() && s.seizure >= 0) {
      const double onset = onsets.at(static_cast<std::size_t>(s.seizure));
      if (std::find(fold_onsets.begin(), fold_onsets.end(), onset) == fold_onsets.end()) fold_onsets.push_back(onset);
    }

  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return test[a].start_s < test[b].start_s; });
  const double stride = static_cast<double>(test.front().length()) / opts.sample_rate;

  FoldOutcome outcome;
  for (std::size_t c = 0; c < opts.classifiers.size(); ++c) {
    const auto& cc = opts.classifiers[c];
    const std::uint64_t seed = fold_rng.split("classifier", c).seed();
    const Scorer score = opts.fit_fn ? opts.fit_fn(cc, balanced, validation, seed)
                                     : default_fit(cc, opts.fit, balanced, validation, seed);
    PredictionTimeline tl;
    tl.stride_s = stride;
    std::vector<double> probs;
    std::vector<int> labels;
    for (auto i : order) {
      const double p = score(test[i].data);
      tl.entries.push_back({test[i].start_s, p, p > 0.5, test[i].preictal()});
      probs.push_back(p);
      labels.push_back(test[i].preictal() ? 1 : 0);
    }
    const double inter_hours = static_cast<double>(test_inter) * stride / 3600.0;
    FoldReport r = score_fold(raise_alarms(tl, opts.policy), fold_onsets, inter_hours, opts.policy);
    r.auc = auc(probs, labels);
    r.test_interictal = test_inter;
    r.test_preictal = test_pre;
    r.train_segments = balanced.size();
    log(std::string(to_string(cc.arch)) + " sens " + std::to_string(r.sens_percent) + " fpr " +
        std::to_string(r.fpr_per_hour) + " auc " + std::to_string(r.auc));
    outcome.per_classifier.push_back(std::move(r));
  }
  return outcome;
}

}  // namespace

std::vector<CvReport> run_cv(const std::vector<Segment>& segments, const std::vector<double>& onsets,
                             const CvOptions& opts) {
  if (opts.classifiers.empty()) throw std::invalid_argument("run_cv: no classifiers configured");
  for (const auto& s : segments) {
    if (s.synthetic) throw ProtocolError("run_cv: input dataset contains synthetic segments");
  }
  const auto folds = make_folds(segments, static_cast<int>(onsets.size()));
  std::vector<FoldOutcome> outcomes(folds.size());
  parallel_for(folds.size(), opts.jobs, [&](std::size_t f) { outcomes[f] = run_fold(segments, folds[f], f, onsets, opts); });

  std::vector<CvReport> reports(opts.classifiers.size());
  for (std::size_t c = 0; c < reports.size(); ++c) {
    auto& rep = reports[c];
    rep.arch = opts.classifiers[c].arch;
    for (auto& o : outcomes) rep.folds.push_back(std::move(o.per_classifier[c]));
    const double n = static_cast<double>(rep.folds.size());
    for (const auto& r : rep.folds) {
      rep.mean_sens += r.sens_percent / n;
      rep.mean_fpr += r.fpr_per_hour / n;
      rep.mean_auc += r.auc / n;
    }
  }
  return reports;
}

std::string report_csv(const std::string& patient, const std::vector<CvReport>& reports) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "Patient,Classifier,Fold,Sens,FPR,AUC\n";
  for (const auto& rep : reports) {
    for (std::size_t f = 0; f < rep.folds.size(); ++f) {
      const auto& r = rep.folds[f];
      out << patient << ',' << to_string(rep.arch) << ',' << f << ',' << r.sens_percent << ',' << r.fpr_per_hour << ','
          << r.auc << '\n';
    }
    out << patient << ',' << to_string(rep.arch) << ",Ave," << rep.mean_sens << ',' << rep.mean_fpr << ','
        << rep.mean_auc << '\n';
  }
  return out.str();
}

std::string report_summary(const std::string& patient, std::string_view method, const std::vector<CvReport>& reports) {
  std::ostringstream out;
  out << std::fixed;
  out << "patient " << patient << ", balance " << method << "\n";
  out << std::left << std::setw(13) << "classifier" << std::right << std::setw(8) << "Sens(%)" << std::setw(10)
      << "FPR(/h)" << std::setw(8) << "AUC" << "\n";
  for (const auto& rep : reports) {
    out << std::left << std::setw(13) << to_string(rep.arch) << std::right << std::setprecision(1) << std::setw(8)
        << rep.mean_sens << std::setprecision(3) << std::setw(10) << rep.mean_fpr << std::setw(8) << rep.mean_auc
        << "\n";
  }
  return out.str();
}

}  // namespace diffeeg
