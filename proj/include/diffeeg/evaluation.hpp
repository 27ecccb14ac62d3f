#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "diffeeg/balance.hpp"
#include "diffeeg/classifiers.hpp"
#include "diffeeg/diffusion.hpp"
#include "diffeeg/network.hpp"
#include "diffeeg/segment.hpp"

namespace diffeeg {

struct AlarmPolicy {
  int k = 8;
  int n = 10;
  double refractory_s = 1800.0;
  double sph_s = 60.0;
  double sop_s = 1800.0;

  void validate() const;
};

struct TimelineEntry {
  double start_s = 0.0;
  double probability = 0.0;
  bool decision = false;  // probability > 0.5
  bool preictal = false;  // ground truth, used only for scoring
};

// Entries in strictly increasing start time. Consecutive entries further
// apart than the stride start a new k-of-n window.
struct PredictionTimeline {
  std::vector<TimelineEntry> entries;
  double stride_s = 0.0;
};

struct Alarm {
  std::size_t index = 0;  // triggering entry
  double time_s = 0.0;    // end of the triggering segment
  bool during_preictal = false;
};

// An alarm fires at a positive entry when at least k of the last n decisions
// (inclusive, fewer at the head of a run) are positive and no alarm fired
// within the previous refractory_s. Negative entries never fire, so trailing
// negatives cannot add alarms.
std::vector<Alarm> raise_alarms(const PredictionTimeline& timeline, const AlarmPolicy& policy);

struct FoldReport {
  double sens_percent = 0.0;
  double fpr_per_hour = 0.0;
  double auc = 0.5;
  std::vector<Alarm> alarms;
  std::vector<bool> predicted;  // per test seizure
  std::size_t false_alarms = 0;
  double interictal_hours = 0.0;
  std::size_t test_interictal = 0;
  std::size_t test_preictal = 0;
  std::size_t train_segments = 0;
};

// A seizure is predicted iff some alarm a has onset in [a + sph, a + sph + sop].
// Alarms raised on interictal data whose window holds no onset are false.
FoldReport score_fold(const std::vector<Alarm>& alarms, const std::vector<double>& onsets, double interictal_hours,
                      const AlarmPolicy& policy);

// Mann-Whitney AUC with ties counted one half.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct DiffusionSettings {
  EpsNetConfig net;  // geometry fields are filled in from the data
  ScheduleConfig schedule;
  TrainOptions train;
  std::size_t stft_window = 32;
  std::size_t stft_hop = 32;
};

using Scorer = std::function<double(const ad::Tensor&)>;
using FitFn = std::function<Scorer(const ClassifierConfig& config, const std::vector<Segment>& train,
                                   const std::vector<Segment>& validation, std::uint64_t seed)>;

struct CvOptions {
  double sample_rate = 64.0;
  BalancePlan plan;
  std::vector<ClassifierConfig> classifiers{ClassifierConfig{}};
  FitOptions fit;
  AlarmPolicy policy;
  DiffusionSettings diffusion;
  unsigned jobs = 1;
  std::uint64_t seed = 0;
  // Replaces make_classifier + fit when set.
  FitFn fit_fn;
  std::function<void(const std::string&)> log;
};

struct CvReport {
  Arch arch = Arch::kMlp;
  std::vector<FoldReport> folds;
  double mean_sens = 0.0;
  double mean_fpr = 0.0;
  double mean_auc = 0.0;
};

// Leave-one-seizure-out evaluation. onsets[i] is the onset of seizure i. Per
// fold the training split is balanced (training a diffusion model on its
// preictal part first when the plan asks for it), each classifier is fitted
// and scored on the untouched test split. Returns one report per classifier.
std::vector<CvReport> run_cv(const std::vector<Segment>& segments, const std::vector<double>& onsets,
                             const CvOptions& opts);

// Per-fold rows and an average row: Patient,Fold,Sens,FPR,AUC.
std::string report_csv(const std::string& patient, const std::vector<CvReport>& reports);
std::string report_summary(const std::string& patient, std::string_view method, const std::vector<CvReport>& reports);

}  // namespace diffeeg
