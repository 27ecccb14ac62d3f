#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "diffeeg/autodiff.hpp"
#include "diffeeg/segment.hpp"

namespace diffeeg {

// softmax(Q K^T / sqrt(d_k)) V for Q, K: [n x d_k], V: [n x d_v].
ad::Var attention(const ad::Var& q, const ad::Var& k, const ad::Var& v);

enum class Arch { kMlp, kCnn, kTransformer };

std::string_view to_string(Arch a);
Arch parse_arch(std::string_view name);

struct ClassifierConfig {
  Arch arch = Arch::kMlp;
  std::size_t channels = 4;
  std::size_t length = 512;
  std::size_t hidden = 16;                   // MLP width, CNN filters, transformer model width
  std::vector<std::size_t> scales{3, 5, 7};  // CNN kernel sizes
  std::size_t dilation = 2;                  // CNN branch dilation
  std::size_t heads = 2;                     // transformer
  std::size_t patch = 16;                    // transformer embedding stride
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  // Preictal logit for one [channels x length] segment.
  virtual ad::Var logit(const ad::Tensor& segment) const = 0;
  virtual ad::NamedParams parameters() const = 0;

  const ClassifierConfig& config() const { return config_; }
  // sigmoid(logit), evaluated without recording a graph.
  double classify(const ad::Tensor& segment) const;

 protected:
  explicit Classifier(ClassifierConfig config) : config_(std::move(config)) {}
  void check_input(const ad::Tensor& segment) const;

  ClassifierConfig config_;
};

// Random weights from seed; the output layer starts at zero.
std::unique_ptr<Classifier> make_classifier(const ClassifierConfig& config, std::uint64_t seed);

// Softmax fusion weights of the CNN's kernel-size branches for a segment.
std::vector<double> cnn_fusion_weights(const Classifier& cnn, const ad::Tensor& segment);

struct FitOptions {
  double lr = 1e-3;
  std::size_t batch = 16;
  int epochs_max = 50;
  int patience = 5;
  // Early stopping is not considered before this many epochs.
  int min_epochs = 10;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_sensitivity = 0.0;
  double val_specificity = 0.0;
};

struct FitHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

// Minibatch Adam on mean binary cross-entropy. After each epoch the
// validation sensitivity and specificity (positive iff p > 0.5) are recorded;
// training stops once neither has improved for `patience` epochs (and at
// least min_epochs have run), and the
// parameters of the epoch with the best sum are restored.
FitHistory fit(Classifier& clf, const std::vector<Segment>& train, const std::vector<Segment>& validation,
               const FitOptions& opts);

}  // namespace diffeeg
