// SPDX-License-Identifier: Apache-2.0
/**
 * @file   adam.hpp
 * @brief  Adam with bias correction.
 */
#ifndef STDET_NN_ADAM_HPP_
#define STDET_NN_ADAM_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "stdet/nn/params.hpp"
#include "stdet/tensor.hpp"

namespace stdet::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const AdamConfig &) const = default;
};

/// One update of a single tensor. `t` is the 1-based step number used for
/// bias correction; m and v are updated in place.
template <class T>
void adam_step(Tensor<T> &param, const Tensor<T> &grad, Tensor<T> &m,
               Tensor<T> &v, std::uint64_t t, const AdamConfig &config);

template <class T> class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) { config_.validate(); }

  /// Applies one step to every parameter using its stored gradient.
  void step(ParamSet<T> &params);

  std::uint64_t steps() const noexcept { return t_; }
  const AdamConfig &config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

}  // namespace stdet::nn

#endif  // STDET_NN_ADAM_HPP_
