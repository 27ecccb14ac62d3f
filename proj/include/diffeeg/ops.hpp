#pragma once

#include <cstddef>
#include <vector>

#include "diffeeg/autodiff.hpp"

// Differentiable operations on Var. Shapes are checked eagerly and mismatches
// throw std::invalid_argument naming the op and the offending shapes.
namespace diffeeg::ad {

// Elementwise. Either operand may be a single-element tensor, which is
// broadcast against the other.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// x: rank-2. axis 0 adds bias[i] to row i, axis 1 adds bias[j] to column j.
Var add_bias(const Var& x, const Var& bias, int axis);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);
// Rows [begin, end) of a rank-2 tensor.
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
// Concatenation along axis 0; trailing extents must agree.
Var concat(const std::vector<Var>& parts);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var softmax_last(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// [C x L] -> [C], mean over the last axis.
Var global_avg_pool(const Var& x);

// Mean squared difference, a scalar.
Var mse(const Var& a, const Var& b);
// Numerically stable binary cross-entropy on a single logit.
Var bce_with_logits(const Var& logit, double target);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

// x: [C_in x L], kernel: [C_out x C_in x K] -> [C_out x L_out] with
// L_out = (L + pad_left + pad_right - dilation*(K-1) - 1) / stride + 1.
Var conv1d(const Var& x, const Var& kernel, const Conv1dOptions& opts);

// Non-causal "same" convolution: K odd, zero padding (K-1)*dilation/2 on
// both sides, output length equals input length.
Var dilated_conv1d(const Var& x, const Var& kernel, std::size_t dilation);

// Scatter-form transposed convolution.
// x: [C_in x F x T], kernel: [C_in x C_out x kF x kT] -> [C_out x F*sf x T*st].
// Requires kF >= sf, kT >= st and (k - s) even on both axes; padding is
// (k - s)/2 so the output extents are exactly the input extents times the
// strides.
Var transposed_conv2d(const Var& x, const Var& kernel, std::size_t stride_f, std::size_t stride_t);

// The strided convolution whose adjoint is transposed_conv2d with the same
// kernel and strides. y: [C_out x F*sf x T*st] -> [C_in x F x T].
Var strided_conv2d(const Var& y, const Var& kernel, std::size_t stride_f, std::size_t stride_t);

}  // namespace diffeeg::ad
