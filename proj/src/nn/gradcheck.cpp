// SPDX-License-Identifier: Apache-2.0
#include "stdet/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stdet/nn/layers.hpp"
#include "stdet/nn/loss.hpp"
#include "stdet/nn/rng.hpp"

namespace stdet::nn {

GradCheckResult grad_check(const std::function<double()> &loss,
                           std::span<const GradTarget> targets, double h) {
  GradCheckResult result;
  for (const auto &target : targets) {
    Tensor<double> &x = *target.value;
    require_shape(*target.analytic, x.shape(), "grad_check analytic");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = loss();
      x[i] = saved - h;
      const double down = loss();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = (*target.analytic)[i];
      if (std::abs(analytic) + std::abs(numeric) < kGradCheckFloor) {
        ++result.skipped;
        continue;
      }
      ++result.checked;
      const double rel = std::abs(analytic - numeric) /
                         std::max(std::abs(analytic), std::abs(numeric));
      if (result.worst.empty() || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = target.name + "[" + std::to_string(i) + "]";
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

namespace {

Tensor<double> random_tensor(const Shape &shape, SplitMix64 &rng,
                             double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto &v : t.values())
    v = rng.uniform(-scale, scale);
  return t;
}

double project(const Tensor<double> &y, const Tensor<double> &w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    s += y[i] * w[i];
  return s;
}

}  // namespace

GradCheckResult grad_check_conv2d(std::uint64_t seed, std::size_t cin,
                                  std::size_t f, std::size_t t,
                                  std::size_t cout, std::size_t k) {
  SplitMix64 rng(seed);
  auto x = random_tensor({cin, f, t}, rng);
  auto w = random_tensor({cout, cin, k, k}, rng, 0.5);
  auto b = random_tensor({cout}, rng, 0.5);
  auto proj = random_tensor({cout, f, t}, rng);

  Conv2dCache<double> cache;
  conv2d(x, w, b, &cache);
  Tensor<double> gw(w.shape()), gb(b.shape());
  const auto gx = conv2d_backward(proj, w, cache, gw, gb);

  auto loss = [&] { return project(conv2d(x, w, b), proj); };
  const GradTarget targets[] = {
      {"input", &x, &gx}, {"weight", &w, &gw}, {"bias", &b, &gb}};
  return grad_check(loss, targets);
}

GradCheckResult grad_check_bigru(std::uint64_t seed, std::size_t t,
                                 std::size_t d, std::size_t h) {
  SplitMix64 rng(seed);
  auto x = random_tensor({t, d}, rng);
  auto fw_w = random_tensor({3 * h, d}, rng, 0.8);
  auto fw_u = random_tensor({3 * h, h}, rng, 0.8);
  auto fw_b = random_tensor({3 * h}, rng, 0.5);
  auto bw_w = random_tensor({3 * h, d}, rng, 0.8);
  auto bw_u = random_tensor({3 * h, h}, rng, 0.8);
  auto bw_b = random_tensor({3 * h}, rng, 0.5);
  auto proj = random_tensor({t, 2 * h}, rng);

  const GruWeights<double> fw{fw_w, fw_u, fw_b}, bw{bw_w, bw_u, bw_b};
  BiGruCache<double> cache;
  bigru(x, fw, bw, &cache);
  Tensor<double> g_fw_w(fw_w.shape()), g_fw_u(fw_u.shape()), g_fw_b(fw_b.shape());
  Tensor<double> g_bw_w(bw_w.shape()), g_bw_u(bw_u.shape()), g_bw_b(bw_b.shape());
  const auto gx = bigru_backward(proj, fw, bw, cache,
                                 GruGrads<double>{g_fw_w, g_fw_u, g_fw_b},
                                 GruGrads<double>{g_bw_w, g_bw_u, g_bw_b});

  auto loss = [&] { return project(bigru(x, fw, bw), proj); };
  const GradTarget targets[] = {
      {"input", &x, &gx},           {"fw.w_input", &fw_w, &g_fw_w},
      {"fw.w_hidden", &fw_u, &g_fw_u}, {"fw.bias", &fw_b, &g_fw_b},
      {"bw.w_input", &bw_w, &g_bw_w}, {"bw.w_hidden", &bw_u, &g_bw_u},
      {"bw.bias", &bw_b, &g_bw_b}};
  return grad_check(loss, targets);
}

GradCheckResult grad_check_linear_sigmoid(std::uint64_t seed, std::size_t t,
                                          std::size_t d, std::size_t c) {
  SplitMix64 rng(seed);
  auto x = random_tensor({t, d}, rng);
  auto w = random_tensor({c, d}, rng);
  auto b = random_tensor({c}, rng, 0.5);
  auto proj = random_tensor({t, c}, rng);

  LinearCache<double> cache;
  linear_sigmoid(x, w, b, &cache);
  Tensor<double> gw(w.shape()), gb(b.shape());
  const auto gx = linear_sigmoid_backward(proj, w, cache, gw, gb);

  auto loss = [&] { return project(linear_sigmoid(x, w, b), proj); };
  const GradTarget targets[] = {
      {"input", &x, &gx}, {"weight", &w, &gw}, {"bias", &b, &gb}};
  return grad_check(loss, targets);
}

GradCheckResult grad_check_maxpool_relu(std::uint64_t seed) {
  SplitMix64 rng(seed);
  auto x = random_tensor({2, 8, 5}, rng);
  auto proj = random_tensor({2, 2, 5}, rng);
  auto forward = [&](PoolCache *cache, Tensor<double> *activated) {
    Tensor<double> a = x;
    relu_inplace(a);
    if (activated)
      *activated = a;
    return maxpool_freq(a, 4, cache);
  };
  PoolCache cache;
  Tensor<double> activated;
  forward(&cache, &activated);
  auto gx = maxpool_freq_backward(proj, cache);
  relu_backward_inplace(activated, gx);
  auto loss = [&] { return project(forward(nullptr, nullptr), proj); };
  const GradTarget targets[] = {{"input", &x, &gx}};
  return grad_check(loss, targets);
}

namespace {

GradCheckResult grad_check_loss(std::uint64_t seed, std::size_t n,
                                const LossConfig &config) {
  SplitMix64 rng(seed);
  Tensor<double> p({n}), y({n}), mask({n});
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = rng.uniform(0.05, 0.95);
    y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    mask[i] = rng.uniform() < 0.8 ? 1.0 : 0.0;
  }
  mask[0] = 1.0;
  Tensor<double> grad;
  loss_mean(p, y, &mask, config, &grad);
  auto loss = [&] { return loss_mean(p, y, &mask, config); };
  const GradTarget targets[] = {{"pred", &p, &grad}};
  return grad_check(loss, targets);
}

}  // namespace

GradCheckResult grad_check_bce(std::uint64_t seed, std::size_t n) {
  return grad_check_loss(seed, n, LossConfig{LossKind::bce, 1.0, 0.0});
}

GradCheckResult grad_check_focal(std::uint64_t seed, std::size_t n,
                                 double alpha, double gamma) {
  return grad_check_loss(seed, n, LossConfig{LossKind::focal, alpha, gamma});
}

}  // namespace stdet::nn
