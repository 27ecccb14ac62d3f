#include "diffeeg/model_io.hpp"

#include <charconv>
#include <sstream>
#include <string>

#include "diffeeg/errors.hpp"

namespace diffeeg {

namespace {

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

template <typename T>
T parse(const Checkpoint& ckpt, std::string_view key) {
  const std::string& text = ckpt.get(key);
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw FormatError("checkpoint: bad value for '" + std::string(key) + "': " + text);
  }
  return value;
}

void restore(const Checkpoint& ckpt, const std::string& prefix, const ad::NamedParams& params) {
  for (const auto& [name, p] : params) {
    const auto& stored = ckpt.tensor(prefix + name);
    auto v = p;
    if (stored.shape() != v.shape()) {
      throw FormatError("checkpoint: tensor " + prefix + name + " has shape " + ad::shape_string(stored.shape()) +
                        ", model expects " + ad::shape_string(v.shape()));
    }
    v.mutable_value() = stored;
  }
}

void expect_kind(const Checkpoint& ckpt, std::string_view kind) {
  if (ckpt.get("kind") != kind) {
    throw FormatError("checkpoint holds a " + ckpt.get("kind") + " model, expected " + std::string(kind));
  }
}

}  // namespace

Checkpoint save_diffusion(const DiffusionBundle& b) {
  if (!b.net) throw std::invalid_argument("save_diffusion: no network");
  const auto& c = b.net->config();
  Checkpoint ck;
  auto meta = [&](std::string k, std::string v) { ck.meta.emplace_back(std::move(k), std::move(v)); };
  meta("kind", "diffusion");
  meta("net.residual_channels", std::to_string(c.residual_channels));
  meta("net.layers", std::to_string(c.layers));
  meta("net.blocks", std::to_string(c.blocks));
  meta("net.kernel", std::to_string(c.kernel));
  meta("net.input_channels", std::to_string(c.input_channels));
  meta("net.segment_length", std::to_string(c.segment_length));
  meta("net.cond_bins", std::to_string(c.cond_bins));
  meta("net.cond_frames", std::to_string(c.cond_frames));
  meta("net.upsample_t0", std::to_string(c.upsample_t[0]));
  meta("net.upsample_t1", std::to_string(c.upsample_t[1]));
  meta("net.upsample_kernel_f", std::to_string(c.upsample_kernel_f));
  meta("net.upsample_slope", number(c.upsample_slope));
  meta("schedule.steps", std::to_string(b.schedule.steps));
  meta("schedule.beta_start", number(b.schedule.beta_start));
  meta("schedule.beta_end", number(b.schedule.beta_end));
  meta("stft.window", std::to_string(b.stft_window));
  meta("stft.hop", std::to_string(b.stft_hop));
  meta("train.iteration", std::to_string(b.state.iteration));
  meta("train.seed", std::to_string(b.state.seed));
  const auto& adam = b.state.optimizer;
  meta("adam.steps", std::to_string(adam.steps()));
  meta("adam.lr", number(adam.options().lr));
  meta("adam.beta1", number(adam.options().beta1));
  meta("adam.beta2", number(adam.options().beta2));
  meta("adam.eps", number(adam.options().eps));

  const auto params = b.net->parameters();
  const bool moments = !adam.first_moments().empty();
  if (moments && adam.first_moments().size() != params.size()) {
    throw std::invalid_argument("save_diffusion: optimizer does not match the network");
  }
  for (std::size_t i = 0; i < params.size(); ++i) ck.tensors.emplace_back("param/" + params[i].first, params[i].second.value());
  if (moments) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.tensors.emplace_back("adam_m/" + params[i].first, adam.first_moments()[i]);
      ck.tensors.emplace_back("adam_v/" + params[i].first, adam.second_moments()[i]);
    }
  }
  return ck;
}

DiffusionBundle load_diffusion(const Checkpoint& ck) {
  expect_kind(ck, "diffusion");
  EpsNetConfig c;
  c.residual_channels = parse<std::size_t>(ck, "net.residual_channels");
  c.layers = parse<std::size_t>(ck, "net.layers");
  c.blocks = parse<std::size_t>(ck, "net.blocks");
  c.kernel = parse<std::size_t>(ck, "net.kernel");
  c.input_channels = parse<std::size_t>(ck, "net.input_channels");
  c.segment_length = parse<std::size_t>(ck, "net.segment_length");
  c.cond_bins = parse<std::size_t>(ck, "net.cond_bins");
  c.cond_frames = parse<std::size_t>(ck, "net.cond_frames");
  c.upsample_t = {parse<std::size_t>(ck, "net.upsample_t0"), parse<std::size_t>(ck, "net.upsample_t1")};
  c.upsample_kernel_f = parse<std::size_t>(ck, "net.upsample_kernel_f");
  c.upsample_slope = parse<double>(ck, "net.upsample_slope");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }

  DiffusionBundle b;
  b.net = std::make_unique<EpsNet>(c, 0);
  b.schedule.steps = parse<int>(ck, "schedule.steps");
  b.schedule.beta_start = parse<double>(ck, "schedule.beta_start");
  b.schedule.beta_end = parse<double>(ck, "schedule.beta_end");
  b.stft_window = parse<std::size_t>(ck, "stft.window");
  b.stft_hop = parse<std::size_t>(ck, "stft.hop");
  b.state.iteration = parse<long>(ck, "train.iteration");
  b.state.seed = parse<std::uint64_t>(ck, "train.seed");

  const auto params = b.net->parameters();
  restore(ck, "param/", params);
  if (ck.has_tensor("adam_m/" + params.front().first)) {
    AdamOptions ao;
    ao.lr = parse<double>(ck, "adam.lr");
    ao.beta1 = parse<double>(ck, "adam.beta1");
    ao.beta2 = parse<double>(ck, "adam.beta2");
    ao.eps = parse<double>(ck, "adam.eps");
    b.state.optimizer = Adam(params, ao);
    auto& m = b.state.optimizer.first_moments();
    auto& v = b.state.optimizer.second_moments();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& sm = ck.tensor("adam_m/" + params[i].first);
      const auto& sv = ck.tensor("adam_v/" + params[i].first);
      if (sm.shape() != m[i].shape() || sv.shape() != v[i].shape()) {
        throw FormatError("checkpoint: optimizer moments for " + params[i].first + " have the wrong shape");
      }
      m[i] = sm;
      v[i] = sv;
    }
    b.state.optimizer.set_steps(parse<std::uint64_t>(ck, "adam.steps"));
  }
  return b;
}

Checkpoint save_classifier(const Classifier& clf) {
  const auto& c = clf.config();
  Checkpoint ck;
  auto meta = [&](std::string k, std::string v) { ck.meta.emplace_back(std::move(k), std::move(v)); };
  meta("kind", "classifier");
  meta("clf.arch", std::string(to_string(c.arch)));
  meta("clf.channels", std::to_string(c.channels));
  meta("clf.length", std::to_string(c.length));
  meta("clf.hidden", std::to_string(c.hidden));
  std::ostringstream scales;
  for (std::size_t i = 0; i < c.scales.size(); ++i) scales << (i ? "," : "") << c.scales[i];
  meta("clf.scales", scales.str());
  meta("clf.dilation", std::to_string(c.dilation));
  meta("clf.heads", std::to_string(c.heads));
  meta("clf.patch", std::to_string(c.patch));
  for (const auto& [name, p] : clf.parameters()) ck.tensors.emplace_back("param/" + name, p.value());
  return ck;
}

std::unique_ptr<Classifier> load_classifier(const Checkpoint& ck) {
  expect_kind(ck, "classifier");
  ClassifierConfig c;
  try {
    c.arch = parse_arch(ck.get("clf.arch"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  c.channels = parse<std::size_t>(ck, "clf.channels");
  c.length = parse<std::size_t>(ck, "clf.length");
  c.hidden = parse<std::size_t>(ck, "clf.hidden");
  c.scales.clear();
  std::istringstream in(ck.get("clf.scales"));
  for (std::string item; std::getline(in, item, ',');) {
    std::size_t v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) throw FormatError("checkpoint: bad clf.scales");
    c.scales.push_back(v);
  }
  c.dilation = parse<std::size_t>(ck, "clf.dilation");
  c.heads = parse<std::size_t>(ck, "clf.heads");
  c.patch = parse<std::size_t>(ck, "clf.patch");
  std::unique_ptr<Classifier> clf;
  try {
    clf = make_classifier(c, 0);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  restore(ck, "param/", clf->parameters());
  return clf;
}

}  // namespace diffeeg
