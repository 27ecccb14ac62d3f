#include "diffeeg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace diffeeg {

Adam::Adam(const ad::NamedParams& params, AdamOptions opts) : opts_(opts) {
  for (const auto& [name, p] : params) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void Adam::step(const ad::NamedParams& params) {
  if (params.size() != m_.size()) throw std::invalid_argument("Adam: parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Var p = params[k].second;
    const ad::Tensor& g = p.grad();
    ad::Tensor& w = p.mutable_value();
    ad::Tensor& m = m_[k];
    ad::Tensor& v = v_[k];
    if (m.size() != w.size()) throw std::invalid_argument("Adam: parameter shape changed");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      w[i] -= opts_.lr * mh / (std::sqrt(vh) + opts_.eps);
    }
  }
}

}  // namespace diffeeg
