// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Central finite-difference verification of analytic gradients
 *         (64-bit only).
 */
#ifndef STDET_NN_GRADCHECK_HPP_
#define STDET_NN_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "stdet/tensor.hpp"

namespace stdet::nn {

inline constexpr double kGradCheckStep = 1e-5;
/// Cells with |analytic| + |numeric| below this are not compared.
inline constexpr double kGradCheckFloor = 1e-8;

struct GradTarget {
  std::string name;
  Tensor<double> *value;           ///< perturbed in place, restored after
  const Tensor<double> *analytic;  ///< same shape as *value
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  ///< "name[index]" of the worst cell
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

/// rel = |a - n| / max(|a|, |n|) with n = (f(x+h) - f(x-h)) / 2h.
GradCheckResult grad_check(const std::function<double()> &loss,
                           std::span<const GradTarget> targets,
                           double h = kGradCheckStep);

// Ready-made checks on random instances. The scalar loss is a fixed random
// projection of the module output, so every output cell gets a distinct
// upstream gradient.
GradCheckResult grad_check_conv2d(std::uint64_t seed, std::size_t cin = 2,
                                  std::size_t f = 5, std::size_t t = 6,
                                  std::size_t cout = 3, std::size_t k = 3);
GradCheckResult grad_check_bigru(std::uint64_t seed, std::size_t t = 4,
                                 std::size_t d = 3, std::size_t h = 2);
GradCheckResult grad_check_linear_sigmoid(std::uint64_t seed,
                                          std::size_t t = 5, std::size_t d = 4,
                                          std::size_t c = 3);
GradCheckResult grad_check_maxpool_relu(std::uint64_t seed);
GradCheckResult grad_check_bce(std::uint64_t seed, std::size_t n = 24);
GradCheckResult grad_check_focal(std::uint64_t seed, std::size_t n = 24,
                                 double alpha = 0.2, double gamma = 2.0);

}  // namespace stdet::nn

#endif  // STDET_NN_GRADCHECK_HPP_
