// SPDX-License-Identifier: Apache-2.0
#include "stdet/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace stdet::nn {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw std::invalid_argument("adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  if (!(epsilon > 0.0))
    throw std::invalid_argument("adam: epsilon must be positive");
}

template <class T>
void adam_step(Tensor<T> &param, const Tensor<T> &grad, Tensor<T> &m,
               Tensor<T> &v, std::uint64_t t, const AdamConfig &config) {
  require_shape(grad, param.shape(), "adam gradient");
  require_shape(m, param.shape(), "adam first moment");
  require_shape(v, param.shape(), "adam second moment");
  if (t == 0)
    throw std::invalid_argument("adam: step number starts at 1");
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double step = config.lr / c1;
  const double root_c2 = std::sqrt(c2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    // lr * m_hat / (sqrt(v_hat) + eps), with the corrections folded in.
    param[i] -= static_cast<T>(step * mi /
                               (std::sqrt(vi) / root_c2 + config.epsilon));
  }
}

template <class T> void Adam<T>::step(ParamSet<T> &params) {
  ++t_;
  for (auto &[name, p] : params) {
    auto [mit, fresh] = m_.try_emplace(name, Tensor<T>(p.value.shape()));
    if (fresh)
      v_.emplace(name, Tensor<T>(p.value.shape()));
    adam_step(p.value, p.grad, mit->second, v_.at(name), t_, config_);
  }
}

template void adam_step<float>(Tensor<float> &, const Tensor<float> &,
                               Tensor<float> &, Tensor<float> &, std::uint64_t,
                               const AdamConfig &);
template void adam_step<double>(Tensor<double> &, const Tensor<double> &,
                                Tensor<double> &, Tensor<double> &,
                                std::uint64_t, const AdamConfig &);
template class Adam<float>;
template class Adam<double>;

}  // namespace stdet::nn
