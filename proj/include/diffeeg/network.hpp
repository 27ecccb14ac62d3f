#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "diffeeg/diffusion.hpp"

namespace diffeeg {

struct EpsNetConfig {
  std::size_t residual_channels = 32;
  std::size_t layers = 12;
  std::size_t blocks = 3;
  std::size_t kernel = 3;
  std::size_t input_channels = 4;
  std::size_t segment_length = 512;
  std::size_t cond_bins = 17;
  std::size_t cond_frames = 16;
  // Time strides of the two transposed convolutions; their product is the hop.
  std::array<std::size_t, 2> upsample_t{4, 8};
  std::size_t upsample_kernel_f = 3;
  double upsample_slope = 0.4;

  std::size_t layers_per_block() const { return layers / blocks; }
  std::size_t hop() const { return upsample_t[0] * upsample_t[1]; }
  // Throws std::invalid_argument on an inconsistent geometry.
  void validate() const;
};

// Time kernel of an upsampling layer: 2*stride for even strides, else the
// stride itself (kernel - stride must be even).
std::size_t upsample_kernel_t(std::size_t stride);

// Residual stack of gated dilated convolutions conditioned on the diffusion
// step and an upsampled spectrogram. Parameters are shared Vars, so copies
// of an EpsNet alias the same weights.
class EpsNet : public NoiseModel {
 public:
  // Random weights drawn from seed; the final head layer starts at zero.
  EpsNet(EpsNetConfig config, std::uint64_t seed);

  const EpsNetConfig& config() const { return config_; }
  std::vector<std::size_t> dilations() const;
  // 1 + blocks (K - 1)(2^n - 1) samples.
  std::size_t receptive_field() const;

  // [bins x frames] -> [bins x L].
  ad::Var upsample_conditioner(const Spectrogram& cond) const;
  ad::Var forward(const ad::Var& x_t, int t, const ad::Var& cond_upsampled) const;

  ad::Var predict(const ad::Var& x_t, int t, const Spectrogram& cond) const override;
  Predictor bind(const Spectrogram& cond) const override;
  ad::NamedParams parameters() const override;

  // The stack with gates replaced by their first half, no biases, no
  // conditioning and no head nonlinearity. Its impulse response spans the
  // receptive field.
  ad::Tensor linear_response(const ad::Tensor& x) const;

 private:
  struct Layer {
    std::size_t dilation;
    ad::Var step_w, step_b;  // [C x 128], [C]
    ad::Var conv_w, conv_b;  // [2C x C x K], [2C]
    ad::Var cond_w, cond_b;  // [2C x bins], [2C]
    ad::Var res_w, res_b;    // [C x C], [C]
    ad::Var skip_w, skip_b;  // [C x C], [C]
  };

  void check_input(const ad::Var& x_t) const;
  std::vector<ad::Var> cond_biases(const ad::Var& cond_upsampled) const;
  ad::Var run(const ad::Var& x_t, int t, const std::vector<ad::Var>& cond_bias) const;

  EpsNetConfig config_;
  ad::Var in_w_, in_b_;      // [C x H], [C]
  std::array<ad::Var, 2> up_w_, up_b_;  // [1 x 1 x kF x kT], [1]
  std::vector<Layer> layers_;
  ad::Var head_w_, head_b_;  // [C x C], [C]
  ad::Var out_w_, out_b_;    // [H x C], [H]
};

}  // namespace diffeeg
