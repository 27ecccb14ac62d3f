#include "diffeeg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace diffeeg::ad {

namespace {

[[noreturn]] void fail(std::string_view op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_rank(std::string_view op, const Var& v, std::size_t rank) {
  if (v.value().rank() != rank) {
    fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(v.shape()));
  }
}

enum class Bcast { kSame, kScalarA, kScalarB };

Bcast broadcast_mode(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.size() == 1) return Bcast::kScalarB;
  if (a.size() == 1) return Bcast::kScalarA;
  fail(op, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Sum of g into a single-element grad, or elementwise accumulate.
void accumulate(Tensor& dst, const Tensor& g, bool reduce) {
  if (reduce) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
    dst[0] += s;
  } else {
    dst += g;
  }
}

template <typename F>
Var unary(const Var& a, std::string_view name, F&& f, std::function<void(Node&)> back) {
  Tensor out(a.shape());
  const double* x = a.value().data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) y[i] = f(x[i]);
  return make_op(std::move(out), name, {a}, std::move(back));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const auto mode = broadcast_mode("add", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(mode == Bcast::kScalarA ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (mode == Bcast::kScalarA ? av[0] : av[i]) + (mode == Bcast::kScalarB ? bv[0] : bv[i]);
  }
  return make_op(std::move(out), "add", {a, b}, [mode](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa.grad, self.grad, mode == Bcast::kScalarA);
    if (pb.requires_grad) accumulate(pb.grad, self.grad, mode == Bcast::kScalarB);
  });
}

Var sub(const Var& a, const Var& b) {
  const auto mode = broadcast_mode("sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(mode == Bcast::kScalarA ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (mode == Bcast::kScalarA ? av[0] : av[i]) - (mode == Bcast::kScalarB ? bv[0] : bv[i]);
  }
  return make_op(std::move(out), "sub", {a, b}, [mode](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa.grad, self.grad, mode == Bcast::kScalarA);
    if (pb.requires_grad) {
      if (mode == Bcast::kScalarB) {
        double s = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) s += self.grad[i];
        pb.grad[0] -= s;
      } else {
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const auto mode = broadcast_mode("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(mode == Bcast::kScalarA ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (mode == Bcast::kScalarA ? av[0] : av[i]) * (mode == Bcast::kScalarB ? bv[0] : bv[i]);
  }
  return make_op(std::move(out), "mul", {a, b}, [mode](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const Tensor& g = self.grad;
    const std::size_t n = g.size();
    auto aval = [&](std::size_t i) { return mode == Bcast::kScalarA ? pa.value[0] : pa.value[i]; };
    auto bval = [&](std::size_t i) { return mode == Bcast::kScalarB ? pb.value[0] : pb.value[i]; };
    if (pa.requires_grad) {
      if (mode == Bcast::kScalarA) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * bval(i);
        pa.grad[0] += s;
      } else {
        for (std::size_t i = 0; i < n; ++i) pa.grad[i] += g[i] * bval(i);
      }
    }
    if (pb.requires_grad) {
      if (mode == Bcast::kScalarB) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * aval(i);
        pb.grad[0] += s;
      } else {
        for (std::size_t i = 0; i < n; ++i) pb.grad[i] += g[i] * aval(i);
      }
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += s * self.grad[i];
  });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](Node& self) {
    self.parents[0]->grad += self.grad;
  });
}

Var add_bias(const Var& x, const Var& bias, int axis) {
  require_rank("add_bias", x, 2);
  if (axis != 0 && axis != 1) fail("add_bias", "axis must be 0 or 1");
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  const std::size_t want = axis == 0 ? rows : cols;
  if (bias.size() != want) {
    fail("add_bias", "bias of " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(x.shape()) + " on axis " + std::to_string(axis));
  }
  Tensor out = x.value();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < rows; ++i) {
    double* r = out.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) r[j] += axis == 0 ? b[i] : b[j];
  }
  return make_op(std::move(out), "add_bias", {x, bias}, [axis, rows, cols](Node& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) px.grad += self.grad;
    if (pb.requires_grad) {
      for (std::size_t i = 0; i < rows; ++i) {
        const double* g = self.grad.data() + i * cols;
        if (axis == 0) {
          double s = 0.0;
          for (std::size_t j = 0; j < cols; ++j) s += g[j];
          pb.grad[i] += s;
        } else {
          for (std::size_t j = 0; j < cols; ++j) pb.grad[j] += g[j];
        }
      }
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    fail("matmul", "inner dimensions differ: " + shape_string(a.shape()) + " x " +
                       shape_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  const double* A = a.value().data();
  const double* B = b.value().data();
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  return make_op(std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double* G = self.grad.data();
    if (pa.requires_grad) {
      const double* B = pb.value.data();
      double* GA = pa.grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
          GA[i * k + p] += s;
        }
      }
    }
    if (pb.requires_grad) {
      const double* A = pa.value.data();
      double* GB = pb.grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          double* gb = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += av * g[j];
        }
      }
    }
  });
}

Var transpose(const Var& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
  return make_op(std::move(out), "transpose", {a}, [r, c](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) p.grad.at(i, j) += self.grad.at(j, i);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_op(std::move(out), "reshape", {a}, [](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", a, 2);
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  if (begin >= end || end > rows) {
    fail("slice_rows", "invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                           ") for " + shape_string(a.shape()));
  }
  Tensor out(Shape{end - begin, cols});
  std::copy(a.value().data() + begin * cols, a.value().data() + end * cols, out.data());
  return make_op(std::move(out), "slice_rows", {a}, [begin, cols](Node& self) {
    auto& p = *self.parents[0];
    double* g = p.grad.data() + begin * cols;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat", "no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) fail("concat", "trailing extents differ: " + shape_string(p.shape()));
    lead += p.shape()[0];
  }
  Shape out_shape{lead};
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data(), p.value().data() + p.size(), out.data() + off);
    off += p.size();
  }
  return make_op(std::move(out), "concat", parts, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const double* g = self.grad.data() + offsets[k];
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g[i];
    }
  });
}

Var tanh(const Var& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value[i];
      p.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](Node& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.value[i];
          p.grad[i] += self.grad[i] * y * (1.0 - y);
        }
      });
}

Var relu(const Var& a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.value[i] > 0) p.grad[i] += self.grad[i];
    }
  });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, "leaky_relu", [slope](double x) { return x > 0 ? x : slope * x; },
               [slope](Node& self) {
                 auto& p = *self.parents[0];
                 for (std::size_t i = 0; i < self.grad.size(); ++i) {
                   p.grad[i] += self.grad[i] * (p.value[i] > 0 ? 1.0 : slope);
                 }
               });
}

Var softmax_last(const Var& a) {
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.size() / cols;
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.value().data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= s;
  }
  return make_op(std::move(out), "softmax", {a}, [rows, cols](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double inner = 0.0;
      for (std::size_t j = 0; j < cols; ++j) inner += g[j] * y[j];
      double* gx = p.grad.data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) gx[j] += y[j] * (g[j] - inner);
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op(Tensor::scalar(s), "sum", {a}, [](Node& self) {
    auto& p = *self.parents[0];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op(Tensor::scalar(s / n), "mean", {a}, [n](Node& self) {
    auto& p = *self.parents[0];
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
  });
}

Var global_avg_pool(const Var& x) {
  require_rank("global_avg_pool", x, 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor out(Shape{rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (double v : x.value().row(i)) s += v;
    out[i] = s / static_cast<double>(cols);
  }
  return make_op(std::move(out), "global_avg_pool", {x}, [rows, cols](Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < rows; ++i) {
      const double g = self.grad[i] / static_cast<double>(cols);
      double* gx = p.grad.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) gx[j] += g;
    }
  });
}

Var mse(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    fail("mse", "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  auto d = sub(a, b);
  return mean(mul(d, d));
}

Var bce_with_logits(const Var& logit, double target) {
  if (logit.size() != 1) fail("bce_with_logits", "expects a single logit");
  const double z = logit.value()[0];
  const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  return make_op(Tensor::scalar(loss), "bce_with_logits", {logit}, [z, target](Node& self) {
    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    self.parents[0]->grad[0] += self.grad[0] * (s - target);
  });
}

// --- convolutions ---------------------------------------------------------

namespace {

struct Conv1dGeom {
  std::size_t cin, cout, k, len, out_len;
};

Conv1dGeom conv1d_geometry(const Var& x, const Var& w, const Conv1dOptions& o) {
  require_rank("conv1d", x, 2);
  require_rank("conv1d", w, 3);
  if (o.stride == 0 || o.dilation == 0) fail("conv1d", "stride and dilation must be positive");
  Conv1dGeom g{x.shape()[0], w.shape()[0], w.shape()[2], x.shape()[1], 0};
  if (w.shape()[1] != g.cin) {
    fail("conv1d", "kernel expects " + std::to_string(w.shape()[1]) + " input channels but input " +
                       shape_string(x.shape()) + " has " + std::to_string(g.cin));
  }
  const std::size_t padded = g.len + o.pad_left + o.pad_right;
  const std::size_t span = o.dilation * (g.k - 1) + 1;
  if (padded < span) fail("conv1d", "kernel span exceeds padded input length");
  g.out_len = (padded - span) / o.stride + 1;
  return g;
}

// Output index range [lo, hi) for which o*stride + offset lands in [0, len).
std::pair<std::size_t, std::size_t> valid_range(long offset, std::size_t stride, std::size_t len,
                                                std::size_t out_len) {
  const long s = static_cast<long>(stride);
  long lo = 0;
  if (offset < 0) lo = (-offset + s - 1) / s;
  const long last = static_cast<long>(len) - 1 - offset;
  if (last < 0) return {0, 0};
  long hi = last / s + 1;
  hi = std::min<long>(hi, static_cast<long>(out_len));
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Var conv1d(const Var& x, const Var& kernel, const Conv1dOptions& opts) {
  const auto g = conv1d_geometry(x, kernel, opts);
  Tensor out(Shape{g.cout, g.out_len});
  const double* X = x.value().data();
  const double* W = kernel.value().data();
  double* Y = out.data();
  const std::size_t s = opts.stride;
  for (std::size_t co = 0; co < g.cout; ++co) {
    double* y = Y + co * g.out_len;
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const double* xr = X + ci * g.len;
      for (std::size_t k = 0; k < g.k; ++k) {
        const double w = W[(co * g.cin + ci) * g.k + k];
        if (w == 0.0) continue;
        const long off = static_cast<long>(k * opts.dilation) - static_cast<long>(opts.pad_left);
        const auto [lo, hi] = valid_range(off, s, g.len, g.out_len);
        if (s == 1) {
          if (lo >= hi) continue;
          const double* xs = xr + (static_cast<long>(lo) + off);
          double* ys = y + lo;
          const std::size_t n = hi - lo;
          for (std::size_t o = 0; o < n; ++o) ys[o] += w * xs[o];
        } else {
          for (std::size_t o = lo; o < hi; ++o) y[o] += w * xr[o * s + off];
        }
      }
    }
  }
  return make_op(std::move(out), "conv1d", {x, kernel}, [g, opts](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const double* G = self.grad.data();
    const double* X = px.value.data();
    const double* W = pw.value.data();
    const std::size_t s = opts.stride;
    for (std::size_t co = 0; co < g.cout; ++co) {
      const double* gr = G + co * g.out_len;
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        const double* xr = X + ci * g.len;
        for (std::size_t k = 0; k < g.k; ++k) {
          const std::size_t widx = (co * g.cin + ci) * g.k + k;
          const long off = static_cast<long>(k * opts.dilation) - static_cast<long>(opts.pad_left);
          const auto [lo, hi] = valid_range(off, s, g.len, g.out_len);
          if (px.requires_grad) {
            const double w = W[widx];
            double* gx = px.grad.data() + ci * g.len;
            if (w != 0.0) {
              for (std::size_t o = lo; o < hi; ++o) gx[o * s + off] += w * gr[o];
            }
          }
          if (pw.requires_grad) {
            double acc = 0.0;
            for (std::size_t o = lo; o < hi; ++o) acc += gr[o] * xr[o * s + off];
            pw.grad[widx] += acc;
          }
        }
      }
    }
  });
}

Var dilated_conv1d(const Var& x, const Var& kernel, std::size_t dilation) {
  require_rank("dilated_conv1d", kernel, 3);
  const std::size_t k = kernel.shape()[2];
  if (k % 2 == 0) fail("dilated_conv1d", "kernel size must be odd, got " + std::to_string(k));
  if (dilation == 0) fail("dilated_conv1d", "dilation must be >= 1");
  const std::size_t pad = (k - 1) * dilation / 2;
  return conv1d(x, kernel, Conv1dOptions{1, dilation, pad, pad});
}

namespace {

struct Conv2dGeom {
  std::size_t cin, cout, kf, kt, sf, st, pf, pt;
};

Conv2dGeom conv2d_geometry(std::string_view op, const Var& kernel, std::size_t sf, std::size_t st) {
  if (sf == 0 || st == 0) fail(op, "strides must be positive");
  if (kernel.value().rank() != 4) fail(op, "kernel must be rank 4, got " + shape_string(kernel.shape()));
  Conv2dGeom g{kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3], sf, st, 0, 0};
  if (g.kf < sf || (g.kf - sf) % 2 != 0 || g.kt < st || (g.kt - st) % 2 != 0) {
    fail(op, "kernel " + shape_string(kernel.shape()) + " incompatible with strides (" +
                 std::to_string(sf) + ", " + std::to_string(st) +
                 "): need k >= stride with k - stride even");
  }
  g.pf = (g.kf - sf) / 2;
  g.pt = (g.kt - st) / 2;
  return g;
}

// small[ci][F][T] scattered into big[co][F*sf][T*st].
void scatter_raw(const Conv2dGeom& g, const Tensor& small, const Tensor& w, Tensor& big) {
  const std::size_t F = small.dim(1), T = small.dim(2);
  const std::size_t FO = F * g.sf, TO = T * g.st;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t fi = 0; fi < F; ++fi)
      for (std::size_t ti = 0; ti < T; ++ti) {
        const double v = small.at(ci, fi, ti);
        if (v == 0.0) continue;
        for (std::size_t co = 0; co < g.cout; ++co)
          for (std::size_t kf = 0; kf < g.kf; ++kf) {
            const long fo = static_cast<long>(fi * g.sf + kf) - static_cast<long>(g.pf);
            if (fo < 0 || fo >= static_cast<long>(FO)) continue;
            const double* wr = w.data() + ((ci * g.cout + co) * g.kf + kf) * g.kt;
            double* out = big.data() + (co * FO + static_cast<std::size_t>(fo)) * TO;
            for (std::size_t kt = 0; kt < g.kt; ++kt) {
              const long to = static_cast<long>(ti * g.st + kt) - static_cast<long>(g.pt);
              if (to < 0 || to >= static_cast<long>(TO)) continue;
              out[to] += v * wr[kt];
            }
          }
      }
}

// big[co][F*sf][T*st] gathered into small[ci][F][T].
void gather_raw(const Conv2dGeom& g, const Tensor& big, const Tensor& w, Tensor& small) {
  const std::size_t F = small.dim(1), T = small.dim(2);
  const std::size_t FO = F * g.sf, TO = T * g.st;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t fi = 0; fi < F; ++fi)
      for (std::size_t ti = 0; ti < T; ++ti) {
        double acc = 0.0;
        for (std::size_t co = 0; co < g.cout; ++co)
          for (std::size_t kf = 0; kf < g.kf; ++kf) {
            const long fo = static_cast<long>(fi * g.sf + kf) - static_cast<long>(g.pf);
            if (fo < 0 || fo >= static_cast<long>(FO)) continue;
            const double* wr = w.data() + ((ci * g.cout + co) * g.kf + kf) * g.kt;
            const double* in = big.data() + (co * FO + static_cast<std::size_t>(fo)) * TO;
            for (std::size_t kt = 0; kt < g.kt; ++kt) {
              const long to = static_cast<long>(ti * g.st + kt) - static_cast<long>(g.pt);
              if (to < 0 || to >= static_cast<long>(TO)) continue;
              acc += in[to] * wr[kt];
            }
          }
        small.at(ci, fi, ti) += acc;
      }
}

// d<big, scatter(small, w)>/dw, identical in form for both conv directions.
void kernel_grad_raw(const Conv2dGeom& g, const Tensor& small, const Tensor& big, Tensor& gw) {
  const std::size_t F = small.dim(1), T = small.dim(2);
  const std::size_t FO = F * g.sf, TO = T * g.st;
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t fi = 0; fi < F; ++fi)
      for (std::size_t ti = 0; ti < T; ++ti) {
        const double v = small.at(ci, fi, ti);
        if (v == 0.0) continue;
        for (std::size_t co = 0; co < g.cout; ++co)
          for (std::size_t kf = 0; kf < g.kf; ++kf) {
            const long fo = static_cast<long>(fi * g.sf + kf) - static_cast<long>(g.pf);
            if (fo < 0 || fo >= static_cast<long>(FO)) continue;
            double* gr = gw.data() + ((ci * g.cout + co) * g.kf + kf) * g.kt;
            const double* in = big.data() + (co * FO + static_cast<std::size_t>(fo)) * TO;
            for (std::size_t kt = 0; kt < g.kt; ++kt) {
              const long to = static_cast<long>(ti * g.st + kt) - static_cast<long>(g.pt);
              if (to < 0 || to >= static_cast<long>(TO)) continue;
              gr[kt] += v * in[to];
            }
          }
      }
}

}  // namespace

Var transposed_conv2d(const Var& x, const Var& kernel, std::size_t stride_f, std::size_t stride_t) {
  const auto g = conv2d_geometry("transposed_conv2d", kernel, stride_f, stride_t);
  require_rank("transposed_conv2d", x, 3);
  if (x.shape()[0] != g.cin) {
    fail("transposed_conv2d", "input " + shape_string(x.shape()) + " does not match kernel " +
                                  shape_string(kernel.shape()));
  }
  Tensor out(Shape{g.cout, x.shape()[1] * stride_f, x.shape()[2] * stride_t});
  scatter_raw(g, x.value(), kernel.value(), out);
  return make_op(std::move(out), "transposed_conv2d", {x, kernel}, [g](Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) gather_raw(g, self.grad, pw.value, px.grad);
    if (pw.requires_grad) kernel_grad_raw(g, px.value, self.grad, pw.grad);
  });
}

Var strided_conv2d(const Var& y, const Var& kernel, std::size_t stride_f, std::size_t stride_t) {
  const auto g = conv2d_geometry("strided_conv2d", kernel, stride_f, stride_t);
  require_rank("strided_conv2d", y, 3);
  if (y.shape()[0] != g.cout || y.shape()[1] % stride_f != 0 || y.shape()[2] % stride_t != 0) {
    fail("strided_conv2d", "input " + shape_string(y.shape()) + " does not match kernel " +
                               shape_string(kernel.shape()) + " and strides");
  }
  Tensor out(Shape{g.cin, y.shape()[1] / stride_f, y.shape()[2] / stride_t});
  gather_raw(g, y.value(), kernel.value(), out);
  return make_op(std::move(out), "strided_conv2d", {y, kernel}, [g](Node& self) {
    auto& py = *self.parents[0];
    auto& pw = *self.parents[1];
    if (py.requires_grad) scatter_raw(g, self.grad, pw.value, py.grad);
    if (pw.requires_grad) kernel_grad_raw(g, self.grad, py.value, pw.grad);
  });
}

}  // namespace diffeeg::ad
