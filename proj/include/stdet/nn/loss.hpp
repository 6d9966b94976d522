// SPDX-License-Identifier: Apache-2.0
/**
 * @file   loss.hpp
 * @brief  Masked binary cross-entropy and focal loss over sigmoid outputs.
 *
 * Both losses are written in terms of p_t (p where the target is 1, 1 - p
 * otherwise), clamped to [kProbEpsilon, 1 - kProbEpsilon] before the log:
 *
 *   bce   = -ln p_t
 *   focal = -alpha * (1 - p_t)^gamma * ln p_t
 *
 * so focal with alpha = 1, gamma = 0 reproduces bce bit for bit. The
 * gradient is the derivative of the cell loss at the clamped p_t.
 */
#ifndef STDET_NN_LOSS_HPP_
#define STDET_NN_LOSS_HPP_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "stdet/tensor.hpp"

namespace stdet::nn {

inline constexpr double kProbEpsilon = 1e-7;

enum class LossKind { bce, focal };

std::string_view loss_name(LossKind kind);
std::optional<LossKind> parse_loss_kind(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::bce;
  double alpha = 0.2;
  double gamma = 2.0;

  void validate() const;
  bool operator==(const LossConfig &) const = default;
};

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unnormalized loss over masked cells.
struct LossSum {
  double sum = 0.0;
  std::size_t count = 0;
};

/// Sums the cell losses where mask > 0.5 (all cells when mask is null) and,
/// when `grad` is given, adds grad_scale * d(cell loss)/dp into it. Targets
/// above 0.5 count as positive.
template <class T>
LossSum loss_sum(const Tensor<T> &pred, const Tensor<T> &target,
                 const Tensor<T> *mask, const LossConfig &config,
                 Tensor<T> *grad = nullptr, T grad_scale = T{1});

/// Mean over masked cells; `grad` (if given) is overwritten with the
/// gradient of that mean. Throws LossError when the mask selects nothing.
template <class T>
double loss_mean(const Tensor<T> &pred, const Tensor<T> &target,
                 const Tensor<T> *mask, const LossConfig &config,
                 Tensor<T> *grad = nullptr);

template <class T>
double bce_loss(const Tensor<T> &pred, const Tensor<T> &target,
                const Tensor<T> *mask = nullptr, Tensor<T> *grad = nullptr);

template <class T>
double focal_loss(const Tensor<T> &pred, const Tensor<T> &target,
                  const Tensor<T> *mask = nullptr, double alpha = 0.2,
                  double gamma = 2.0, Tensor<T> *grad = nullptr);

}  // namespace stdet::nn

#endif  // STDET_NN_LOSS_HPP_
