// SPDX-License-Identifier: Apache-2.0
#include "stdet/nn/loss.hpp"

#include <algorithm>
#include <cmath>

namespace stdet::nn {

std::string_view loss_name(LossKind kind) {
  return kind == LossKind::bce ? "bce" : "focal";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) {
  if (name == "bce" || name == "BCE")
    return LossKind::bce;
  if (name == "focal" || name == "Focal")
    return LossKind::focal;
  return std::nullopt;
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw LossError("focal alpha must lie in [0, 1]");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw LossError("focal gamma must be finite and >= 0");
}

namespace {

struct CellLoss {
  double value;
  double d_dq;  // derivative with respect to p_t
};

inline CellLoss bce_cell(double q) { return {-std::log(q), -1.0 / q}; }

inline CellLoss focal_cell(double q, double alpha, double gamma) {
  const double lq = std::log(q);
  const double m = std::pow(1.0 - q, gamma);
  const double dm = gamma > 0.0 ? -gamma * std::pow(1.0 - q, gamma - 1.0) : 0.0;
  return {-alpha * m * lq, -alpha * (dm * lq + m / q)};
}

}  // namespace

template <class T>
LossSum loss_sum(const Tensor<T> &pred, const Tensor<T> &target,
                 const Tensor<T> *mask, const LossConfig &config,
                 Tensor<T> *grad, T grad_scale) {
  config.validate();
  require_shape(target, pred.shape(), "loss target");
  if (mask)
    require_shape(*mask, pred.shape(), "loss mask");
  if (grad)
    require_shape(*grad, pred.shape(), "loss gradient");
  LossSum out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask && !((*mask)[i] > T{0.5}))
      continue;
    const bool positive = target[i] > T{0.5};
    const double p = static_cast<double>(pred[i]);
    const double q =
        std::clamp(positive ? p : 1.0 - p, kProbEpsilon, 1.0 - kProbEpsilon);
    const CellLoss cell = config.kind == LossKind::bce
                              ? bce_cell(q)
                              : focal_cell(q, config.alpha, config.gamma);
    out.sum += cell.value;
    ++out.count;
    if (grad) {
      const double d = positive ? cell.d_dq : -cell.d_dq;
      (*grad)[i] += grad_scale * static_cast<T>(d);
    }
  }
  return out;
}

template <class T>
double loss_mean(const Tensor<T> &pred, const Tensor<T> &target,
                 const Tensor<T> *mask, const LossConfig &config,
                 Tensor<T> *grad) {
  std::size_t count = pred.size();
  if (mask) {
    require_shape(*mask, pred.shape(), "loss mask");
    count = static_cast<std::size_t>(std::count_if(
        mask->values().begin(), mask->values().end(),
        [](T m) { return m > T{0.5}; }));
  }
  if (count == 0)
    throw LossError("loss over an empty mask");
  if (grad)
    *grad = Tensor<T>(pred.shape());
  const LossSum s = loss_sum(pred, target, mask, config, grad,
                             static_cast<T>(1.0 / static_cast<double>(count)));
  return s.sum / static_cast<double>(s.count);
}

template <class T>
double bce_loss(const Tensor<T> &pred, const Tensor<T> &target,
                const Tensor<T> *mask, Tensor<T> *grad) {
  return loss_mean(pred, target, mask, LossConfig{LossKind::bce, 1.0, 0.0},
                   grad);
}

template <class T>
double focal_loss(const Tensor<T> &pred, const Tensor<T> &target,
                  const Tensor<T> *mask, double alpha, double gamma,
                  Tensor<T> *grad) {
  return loss_mean(pred, target, mask, LossConfig{LossKind::focal, alpha, gamma},
                   grad);
}

#define STDET_INSTANTIATE_LOSS(T)                                              \
  template LossSum loss_sum<T>(const Tensor<T> &, const Tensor<T> &,           \
                               const Tensor<T> *, const LossConfig &,          \
                               Tensor<T> *, T);                                \
  template double loss_mean<T>(const Tensor<T> &, const Tensor<T> &,           \
                               const Tensor<T> *, const LossConfig &,          \
                               Tensor<T> *);                                   \
  template double bce_loss<T>(const Tensor<T> &, const Tensor<T> &,            \
                              const Tensor<T> *, Tensor<T> *);                 \
  template double focal_loss<T>(const Tensor<T> &, const Tensor<T> &,          \
                                const Tensor<T> *, double, double,             \
                                Tensor<T> *);

STDET_INSTANTIATE_LOSS(float)
STDET_INSTANTIATE_LOSS(double)

#undef STDET_INSTANTIATE_LOSS

}  // namespace stdet::nn
