#include "diffeeg/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "diffeeg/ops.hpp"

namespace diffeeg {

using ad::Shape;
using ad::Tensor;
using ad::Var;

void EpsNetConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("EpsNetConfig: " + what); };
  if (residual_channels == 0 || layers == 0 || blocks == 0 || input_channels == 0 || segment_length == 0) {
    fail("channels, layers, blocks and geometry must be positive");
  }
  if (layers % blocks != 0) fail("layers must be divisible by blocks");
  if (kernel % 2 == 0) fail("kernel must be odd");
  if (upsample_t[0] == 0 || upsample_t[1] == 0) fail("upsample strides must be positive");
  if (upsample_kernel_f % 2 == 0) fail("frequency kernel must be odd");
  if (cond_bins == 0 || cond_frames == 0) fail("conditioner geometry must be positive");
  if (cond_frames * hop() != segment_length) {
    fail("conditioner frames " + std::to_string(cond_frames) + " x hop " + std::to_string(hop()) +
         " != segment length " + std::to_string(segment_length));
  }
}

std::size_t upsample_kernel_t(std::size_t stride) { return stride % 2 == 0 ? 2 * stride : stride; }

namespace {

Var init(Rng& rng, Shape shape, std::size_t fan_in) {
  Tensor t = rng.normal_tensor(shape);
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v *= s;
  return Var::parameter(std::move(t));
}

Var zeros(Shape shape) { return Var::parameter(Tensor(std::move(shape))); }

// 1x1 convolution: [out x in] weight times [in x L] plus per-row bias.
Var pointwise(const Var& w, const Var& b, const Var& x) { return ad::add_bias(ad::matmul(w, x), b, 0); }

}  // namespace

EpsNet::EpsNet(EpsNetConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng = Rng(seed).split("epsnet");
  const std::size_t c = config_.residual_channels, h = config_.input_channels;
  const std::size_t k = config_.kernel, bins = config_.cond_bins;
  in_w_ = init(rng, {c, h}, h);
  in_b_ = zeros({c});
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t kf = config_.upsample_kernel_f, kt = upsample_kernel_t(config_.upsample_t[i]);
    up_w_[i] = init(rng, {1, 1, kf, kt}, kf * kt / config_.upsample_t[i]);
    up_b_[i] = zeros({1});
  }
  const auto dil = dilations();
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.dilation = dil[l];
    layer.step_w = init(rng, {c, kStepEmbeddingSize}, kStepEmbeddingSize);
    layer.step_b = zeros({c});
    layer.conv_w = init(rng, {2 * c, c, k}, c * k);
    layer.conv_b = zeros({2 * c});
    layer.cond_w = init(rng, {2 * c, bins}, bins);
    layer.cond_b = zeros({2 * c});
    layer.res_w = init(rng, {c, c}, c);
    layer.res_b = zeros({c});
    layer.skip_w = init(rng, {c, c}, c);
    layer.skip_b = zeros({c});
    layers_.push_back(std::move(layer));
  }
  head_w_ = init(rng, {c, c}, c);
  head_b_ = zeros({c});
  out_w_ = zeros({h, c});
  out_b_ = zeros({h});
}

std::vector<std::size_t> EpsNet::dilations() const {
  std::vector<std::size_t> d;
  for (std::size_t b = 0; b < config_.blocks; ++b)
    for (std::size_t j = 0; j < config_.layers_per_block(); ++j) d.push_back(std::size_t{1} << j);
  return d;
}

std::size_t EpsNet::receptive_field() const {
  return 1 + config_.blocks * (config_.kernel - 1) * ((std::size_t{1} << config_.layers_per_block()) - 1);
}

Var EpsNet::upsample_conditioner(const Spectrogram& cond) const {
  if (cond.bins() != config_.cond_bins || cond.frames() != config_.cond_frames) {
    throw std::invalid_argument("EpsNet: conditioner " + ad::shape_string(cond.values.shape()) +
                                " does not match configured [" + std::to_string(config_.cond_bins) + "x" +
                                std::to_string(config_.cond_frames) + "]");
  }
  Var x = Var::constant(cond.values.reshaped({1, cond.bins(), cond.frames()}));
  for (std::size_t i = 0; i < 2; ++i) {
    x = ad::transposed_conv2d(x, up_w_[i], 1, config_.upsample_t[i]);
    x = ad::leaky_relu(ad::add(x, up_b_[i]), config_.upsample_slope);
  }
  return ad::reshape(x, {config_.cond_bins, config_.segment_length});
}

void EpsNet::check_input(const Var& x_t) const {
  const Shape want{config_.input_channels, config_.segment_length};
  if (x_t.shape() != want) {
    throw std::invalid_argument("EpsNet: input " + ad::shape_string(x_t.shape()) + " expected " +
                                ad::shape_string(want));
  }
}

std::vector<Var> EpsNet::cond_biases(const Var& cond_upsampled) const {
  const Shape want{config_.cond_bins, config_.segment_length};
  if (cond_upsampled.shape() != want) {
    throw std::invalid_argument("EpsNet: upsampled conditioner " + ad::shape_string(cond_upsampled.shape()) +
                                " expected " + ad::shape_string(want));
  }
  std::vector<Var> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) out.push_back(pointwise(layer.cond_w, layer.cond_b, cond_upsampled));
  return out;
}

Var EpsNet::run(const Var& x_t, int t, const std::vector<Var>& cond_bias) const {
  const std::size_t c = config_.residual_channels;
  const auto emb = step_embedding(static_cast<double>(t));
  const Var e = Var::constant(Tensor(Shape{kStepEmbeddingSize, 1}, std::vector<double>(emb.vector.begin(), emb.vector.end())));
  Var res = ad::relu(pointwise(in_w_, in_b_, x_t));
  Var skips;
  const double rescale = 1.0 / std::sqrt(2.0);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const Var step_bias = ad::reshape(pointwise(layer.step_w, layer.step_b, e), {c});
    const Var y = ad::add_bias(res, step_bias, 0);
    Var h = ad::add_bias(ad::dilated_conv1d(y, layer.conv_w, layer.dilation), layer.conv_b, 0);
    h = ad::add(h, cond_bias[l]);
    const Var gate = ad::mul(ad::tanh(ad::slice_rows(h, 0, c)), ad::sigmoid(ad::slice_rows(h, c, 2 * c)));
    res = ad::scale(ad::add(res, pointwise(layer.res_w, layer.res_b, gate)), rescale);
    const Var skip = pointwise(layer.skip_w, layer.skip_b, gate);
    skips = skips.defined() ? ad::add(skips, skip) : skip;
  }
  skips = ad::scale(skips, 1.0 / std::sqrt(static_cast<double>(layers_.size())));
  const Var hidden = ad::relu(pointwise(head_w_, head_b_, ad::relu(skips)));
  return pointwise(out_w_, out_b_, hidden);
}

Var EpsNet::forward(const Var& x_t, int t, const Var& cond_upsampled) const {
  check_input(x_t);
  return run(x_t, t, cond_biases(cond_upsampled));
}

Var EpsNet::predict(const Var& x_t, int t, const Spectrogram& cond) const {
  return forward(x_t, t, upsample_conditioner(cond));
}

NoiseModel::Predictor EpsNet::bind(const Spectrogram& cond) const {
  std::vector<Var> biases;
  {
    ad::NoGradGuard guard;
    biases = cond_biases(upsample_conditioner(cond));
  }
  return [this, biases = std::move(biases)](const Tensor& x_t, int t) {
    ad::NoGradGuard guard;
    const Var x = Var::constant(x_t);
    check_input(x);
    return run(x, t, biases).value();
  };
}

ad::NamedParams EpsNet::parameters() const {
  ad::NamedParams p{{"input.w", in_w_}, {"input.b", in_b_}};
  for (std::size_t i = 0; i < 2; ++i) {
    p.emplace_back("upsample" + std::to_string(i) + ".w", up_w_[i]);
    p.emplace_back("upsample" + std::to_string(i) + ".b", up_b_[i]);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    p.emplace_back(prefix + "step.w", L.step_w);
    p.emplace_back(prefix + "step.b", L.step_b);
    p.emplace_back(prefix + "conv.w", L.conv_w);
    p.emplace_back(prefix + "conv.b", L.conv_b);
    p.emplace_back(prefix + "cond.w", L.cond_w);
    p.emplace_back(prefix + "cond.b", L.cond_b);
    p.emplace_back(prefix + "res.w", L.res_w);
    p.emplace_back(prefix + "res.b", L.res_b);
    p.emplace_back(prefix + "skip.w", L.skip_w);
    p.emplace_back(prefix + "skip.b", L.skip_b);
  }
  p.emplace_back("head.w", head_w_);
  p.emplace_back("head.b", head_b_);
  p.emplace_back("output.w", out_w_);
  p.emplace_back("output.b", out_b_);
  return p;
}

Tensor EpsNet::linear_response(const Tensor& x) const {
  ad::NoGradGuard guard;
  const std::size_t c = config_.residual_channels;
  Var res = ad::matmul(in_w_, Var::constant(x));
  Var skips;
  for (const auto& layer : layers_) {
    const Var gate = ad::slice_rows(ad::dilated_conv1d(res, layer.conv_w, layer.dilation), 0, c);
    res = ad::add(res, ad::matmul(layer.res_w, gate));
    const Var skip = ad::matmul(layer.skip_w, gate);
    skips = skips.defined() ? ad::add(skips, skip) : skip;
  }
  return ad::matmul(head_w_, skips).value();
}

}  // namespace diffeeg
