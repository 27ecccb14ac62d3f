#include "diffeeg/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diffeeg/errors.hpp"
#include "diffeeg/ops.hpp"
#include "diffeeg/optim.hpp"
#include "diffeeg/rng.hpp"

namespace diffeeg {

using ad::Shape;
using ad::Tensor;
using ad::Var;

Var attention(const Var& q, const Var& k, const Var& v) {
  if (q.value().rank() != 2 || k.value().rank() != 2 || v.value().rank() != 2) {
    throw std::invalid_argument("attention: Q, K and V must be rank 2");
  }
  if (q.shape()[1] != k.shape()[1] || k.shape()[0] != v.shape()[0]) {
    throw std::invalid_argument("attention: incompatible shapes Q" + ad::shape_string(q.shape()) + " K" +
                                ad::shape_string(k.shape()) + " V" + ad::shape_string(v.shape()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  return ad::matmul(ad::softmax_last(ad::scale(ad::matmul(q, ad::transpose(k)), scale)), v);
}

std::string_view to_string(Arch a) {
  switch (a) {
    case Arch::kMlp: return "mlp";
    case Arch::kCnn: return "cnn";
    case Arch::kTransformer: return "transformer";
  }
  return "unknown";
}

Arch parse_arch(std::string_view name) {
  for (auto a : {Arch::kMlp, Arch::kCnn, Arch::kTransformer})
    if (name == to_string(a)) return a;
  throw std::invalid_argument("unknown classifier '" + std::string(name) + "' (expected mlp, cnn or transformer)");
}

void Classifier::check_input(const Tensor& segment) const {
  if (segment.shape() != Shape{config_.channels, config_.length}) {
    throw std::invalid_argument("classifier: segment " + ad::shape_string(segment.shape()) + " expected [" +
                                std::to_string(config_.channels) + "x" + std::to_string(config_.length) + "]");
  }
}

double Classifier::classify(const Tensor& segment) const {
  ad::NoGradGuard guard;
  const double z = logit(segment).item();
  return 1.0 / (1.0 + std::exp(-z));
}

namespace {

Var init(Rng& rng, Shape shape, std::size_t fan_in) {
  Tensor t = rng.normal_tensor(shape);
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v *= s;
  return Var::parameter(std::move(t));
}

Var zeros(Shape shape) { return Var::parameter(Tensor(std::move(shape))); }

// Row vector [1 x in] times [in x out] plus bias, as a flat [out].
Var dense(const Var& x, const Var& w, const Var& b) {
  const std::size_t in = w.shape()[0], out = w.shape()[1];
  return ad::add(ad::reshape(ad::matmul(ad::reshape(x, {1, in}), w), {out}), b);
}

// Per-time-step channel mixing through time-shared dense weights.
class MlpClassifier : public Classifier {
 public:
  MlpClassifier(ClassifierConfig c, Rng& rng) : Classifier(std::move(c)) {
    const std::size_t h = config_.channels, d = config_.hidden, l = config_.length;
    time_w_ = init(rng, {l, d}, l);
    time_b_ = zeros({d});
    mix_w_ = init(rng, {h, h}, h);
    mix_b_ = zeros({h});
    hidden_w_ = init(rng, {d, d}, d);
    hidden_b_ = zeros({d});
    out_w_ = zeros({d, 1});
    out_b_ = zeros({1});
  }

  Var logit(const Tensor& segment) const override {
    check_input(segment);
    const Var x = Var::constant(segment);
    // Temporal dense layer shared by all channels: [H x L] -> [H x D].
    Var z = ad::relu(ad::add_bias(ad::matmul(x, time_w_), time_b_, 1));
    // Inter-channel layer.
    z = ad::relu(ad::add(z, ad::add_bias(ad::matmul(mix_w_, z), mix_b_, 0)));
    // Average over channels: [D].
    const Var pooled = ad::global_avg_pool(ad::transpose(z));
    const Var hidden = ad::relu(dense(pooled, hidden_w_, hidden_b_));
    return dense(hidden, out_w_, out_b_);
  }

  ad::NamedParams parameters() const override {
    return {{"time.w", time_w_},     {"time.b", time_b_},     {"mix.w", mix_w_}, {"mix.b", mix_b_},
            {"hidden.w", hidden_w_}, {"hidden.b", hidden_b_}, {"out.w", out_w_}, {"out.b", out_b_}};
  }

 private:
  Var time_w_, time_b_, mix_w_, mix_b_, hidden_w_, hidden_b_, out_w_, out_b_;
};

// Parallel dilated convolutions fused by pooled softmax weights.
class CnnClassifier : public Classifier {
 public:
  CnnClassifier(ClassifierConfig c, Rng& rng) : Classifier(std::move(c)) {
    const std::size_t h = config_.channels, f = config_.hidden;
    if (config_.scales.empty()) throw std::invalid_argument("cnn: needs at least one kernel scale");
    for (auto k : config_.scales) {
      if (k % 2 == 0) throw std::invalid_argument("cnn: kernel scales must be odd");
      branch_w_.push_back(init(rng, {f, h, k}, h * k));
      branch_b_.push_back(zeros({f}));
    }
    const std::size_t n = config_.scales.size();
    fuse_w_ = init(rng, {f, n}, f);
    fuse_b_ = zeros({n});
    head_w_ = init(rng, {f, f, kHeadKernel}, f * kHeadKernel);
    head_b_ = zeros({f});
    out_w_ = zeros({f, 1});
    out_b_ = zeros({1});
  }

  std::vector<Var> branches(const Var& x) const {
    std::vector<Var> out;
    for (std::size_t i = 0; i < branch_w_.size(); ++i) {
      out.push_back(ad::relu(ad::add_bias(ad::dilated_conv1d(x, branch_w_[i], config_.dilation), branch_b_[i], 0)));
    }
    return out;
  }

  // Softmax over scales from the pooled sum of the branch maps.
  Var fusion(const std::vector<Var>& maps) const {
    Var total = maps.front();
    for (std::size_t i = 1; i < maps.size(); ++i) total = ad::add(total, maps[i]);
    const Var scores = dense(ad::global_avg_pool(total), fuse_w_, fuse_b_);
    return ad::softmax_last(ad::reshape(scores, {1, maps.size()}));
  }

  Var logit(const Tensor& segment) const override {
    check_input(segment);
    const auto maps = branches(Var::constant(segment));
    const Var weights = ad::reshape(fusion(maps), {maps.size(), 1});
    Var fused;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      const Var term = ad::mul(maps[i], ad::slice_rows(weights, i, i + 1));
      fused = fused.defined() ? ad::add(fused, term) : term;
    }
    ad::Conv1dOptions strided;
    strided.stride = kHeadKernel;
    const Var head = ad::relu(ad::add_bias(ad::conv1d(fused, head_w_, strided), head_b_, 0));
    return dense(ad::global_avg_pool(head), out_w_, out_b_);
  }

  std::vector<double> fusion_weights(const Tensor& segment) const {
    check_input(segment);
    ad::NoGradGuard guard;
    const auto w = fusion(branches(Var::constant(segment))).value();
    return {w.values().begin(), w.values().end()};
  }

  ad::NamedParams parameters() const override {
    ad::NamedParams p;
    for (std::size_t i = 0; i < branch_w_.size(); ++i) {
      p.emplace_back("branch" + std::to_string(i) + ".w", branch_w_[i]);
      p.emplace_back("branch" + std::to_string(i) + ".b", branch_b_[i]);
    }
    p.insert(p.end(), {{"fuse.w", fuse_w_}, {"fuse.b", fuse_b_}, {"head.w", head_w_}, {"head.b", head_b_},
                       {"out.w", out_w_}, {"out.b", out_b_}});
    return p;
  }

 private:
  static constexpr std::size_t kHeadKernel = 4;
  std::vector<Var> branch_w_, branch_b_;
  Var fuse_w_, fuse_b_, head_w_, head_b_, out_w_, out_b_;
};

// Strided convolution tokens, sinusoidal positions, one encoder block.
class TransformerClassifier : public Classifier {
 public:
  TransformerClassifier(ClassifierConfig c, Rng& rng) : Classifier(std::move(c)) {
    const std::size_t h = config_.channels, d = config_.hidden, p = config_.patch, heads = config_.heads;
    if (p == 0 || config_.length < p) throw std::invalid_argument("transformer: patch must be in [1, length]");
    if (heads == 0 || d % heads != 0) throw std::invalid_argument("transformer: width must divide into heads");
    tokens_ = (config_.length - p) / p + 1;
    const std::size_t dk = d / heads;
    embed_w_ = init(rng, {d, h, p}, h * p);
    embed_b_ = zeros({d});
    for (std::size_t i = 0; i < heads; ++i) {
      wq_.push_back(init(rng, {d, dk}, d));
      wk_.push_back(init(rng, {d, dk}, d));
      wv_.push_back(init(rng, {d, dk}, d));
    }
    wo_ = init(rng, {d, d}, d);
    ff1_w_ = init(rng, {d, 2 * d}, d);
    ff1_b_ = zeros({2 * d});
    ff2_w_ = init(rng, {2 * d, d}, 2 * d);
    ff2_b_ = zeros({d});
    out_w_ = zeros({d, 1});
    out_b_ = zeros({1});
    positions_ = Tensor(Shape{tokens_, d});
    for (std::size_t pos = 0; pos < tokens_; ++pos)
      for (std::size_t i = 0; i < d; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        positions_.at(pos, i) = i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
      }
  }

  Var logit(const Tensor& segment) const override {
    check_input(segment);
    ad::Conv1dOptions patches;
    patches.stride = config_.patch;
    const Var emb = ad::add_bias(ad::conv1d(Var::constant(segment), embed_w_, patches), embed_b_, 0);
    Var x = ad::add(ad::transpose(emb), Var::constant(positions_));  // [n x d]
    std::vector<Var> heads;
    for (std::size_t i = 0; i < wq_.size(); ++i) {
      const Var out = attention(ad::matmul(x, wq_[i]), ad::matmul(x, wk_[i]), ad::matmul(x, wv_[i]));
      heads.push_back(ad::transpose(out));
    }
    x = ad::add(x, ad::matmul(ad::transpose(ad::concat(heads)), wo_));
    const Var ff = ad::add_bias(ad::matmul(ad::relu(ad::add_bias(ad::matmul(x, ff1_w_), ff1_b_, 1)), ff2_w_), ff2_b_, 1);
    x = ad::add(x, ff);
    return dense(ad::global_avg_pool(ad::transpose(x)), out_w_, out_b_);
  }

  ad::NamedParams parameters() const override {
    ad::NamedParams p{{"embed.w", embed_w_}, {"embed.b", embed_b_}};
    for (std::size_t i = 0; i < wq_.size(); ++i) {
      const std::string h = "head" + std::to_string(i);
      p.emplace_back(h + ".q", wq_[i]);
      p.emplace_back(h + ".k", wk_[i]);
      p.emplace_back(h + ".v", wv_[i]);
    }
    p.insert(p.end(), {{"attn.o", wo_},    {"ff1.w", ff1_w_}, {"ff1.b", ff1_b_}, {"ff2.w", ff2_w_},
                       {"ff2.b", ff2_b_}, {"out.w", out_w_}, {"out.b", out_b_}});
    return p;
  }

 private:
  std::size_t tokens_ = 0;
  Tensor positions_;
  Var embed_w_, embed_b_;
  std::vector<Var> wq_, wk_, wv_;
  Var wo_, ff1_w_, ff1_b_, ff2_w_, ff2_b_, out_w_, out_b_;
};

std::vector<Tensor> snapshot(const ad::NamedParams& params) {
  std::vector<Tensor> out;
  for (const auto& [n, p] : params) out.push_back(p.value());
  return out;
}

void restore(const ad::NamedParams& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].second;
    p.mutable_value() = values[i];
  }
}

void require_both_classes(const std::vector<Segment>& set, const char* what) {
  const auto [inter, pre] = class_counts(set);
  if (inter == 0 || pre == 0) {
    throw ProtocolError(std::string("fit: ") + what + " set has a single class (" + std::to_string(inter) +
                        " interictal, " + std::to_string(pre) + " preictal)");
  }
}

}  // namespace

std::unique_ptr<Classifier> make_classifier(const ClassifierConfig& config, std::uint64_t seed) {
  if (config.channels == 0 || config.length == 0 || config.hidden == 0) {
    throw std::invalid_argument("classifier: channels, length and width must be positive");
  }
  Rng rng = Rng(seed).split(to_string(config.arch));
  switch (config.arch) {
    case Arch::kMlp: return std::make_unique<MlpClassifier>(config, rng);
    case Arch::kCnn: return std::make_unique<CnnClassifier>(config, rng);
    case Arch::kTransformer: return std::make_unique<TransformerClassifier>(config, rng);
  }
  throw std::invalid_argument("classifier: unknown architecture");
}

std::vector<double> cnn_fusion_weights(const Classifier& cnn, const Tensor& segment) {
  const auto* c = dynamic_cast<const CnnClassifier*>(&cnn);
  if (!c) throw std::invalid_argument("cnn_fusion_weights: not a CNN classifier");
  return c->fusion_weights(segment);
}

FitHistory fit(Classifier& clf, const std::vector<Segment>& train, const std::vector<Segment>& validation,
               const FitOptions& opts) {
  require_both_classes(train, "training");
  require_both_classes(validation, "validation");
  if (opts.batch == 0 || opts.epochs_max < 1 || opts.patience < 1) {
    throw std::invalid_argument("fit: batch, epochs_max and patience must be positive");
  }
  const auto params = clf.parameters();
  AdamOptions ao;
  ao.lr = opts.lr;
  Adam adam(params, ao);
  const Rng root(opts.seed);

  FitHistory history;
  std::vector<Tensor> best_params = snapshot(params);
  double best_sum = -1.0, best_sens = -1.0, best_spec = -1.0;
  int stale = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= opts.epochs_max; ++epoch) {
    if (opts.shuffle) {
      Rng shuffle = root.split("epoch", static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), shuffle.engine());
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch) {
      const std::size_t stop = std::min(order.size(), start + opts.batch);
      ad::zero_grad(params);
      Var total;
      for (std::size_t j = start; j < stop; ++j) {
        const auto& s = train[order[j]];
        const Var l = ad::bce_with_logits(clf.logit(s.data), s.preictal() ? 1.0 : 0.0);
        total = total.defined() ? ad::add(total, l) : l;
      }
      const Var loss = ad::scale(total, 1.0 / static_cast<double>(stop - start));
      ad::backward(loss);
      adam.step(params);
      epoch_loss += loss.item() * static_cast<double>(stop - start);
    }

    std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
    for (const auto& s : validation) {
      const bool predicted = clf.classify(s.data) > 0.5;
      if (s.preictal()) {
        ++pos;
        tp += predicted ? 1 : 0;
      } else {
        ++neg;
        tn += predicted ? 0 : 1;
      }
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train.size()),
                    static_cast<double>(tp) / static_cast<double>(pos), static_cast<double>(tn) / static_cast<double>(neg)};
    history.epochs.push_back(rec);

    if (rec.val_sensitivity + rec.val_specificity > best_sum) {
      best_sum = rec.val_sensitivity + rec.val_specificity;
      best_params = snapshot(params);
      history.best_epoch = epoch;
    }
    const bool improved = rec.val_sensitivity > best_sens || rec.val_specificity > best_spec;
    best_sens = std::max(best_sens, rec.val_sensitivity);
    best_spec = std::max(best_spec, rec.val_specificity);
    stale = improved ? 0 : stale + 1;
    if (stale >= opts.patience && epoch >= opts.min_epochs) break;
  }
  restore(params, best_params);
  return history;
}

}  // namespace diffeeg
