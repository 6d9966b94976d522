// SPDX-License-Identifier: Apache-2.0
#include "stdet/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "stdet/simd.hpp"

namespace stdet::nn {

template <class T> T sigmoid(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T> Tensor<T> transpose2d(const Tensor<T> &x) {
  if (x.rank() != 2)
    throw ShapeError("transpose2d: rank-2 tensor required, got " +
                     shape_string(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1);
  Tensor<T> y({b, a});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      y[j * a + i] = x[i * b + j];
  return y;
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

struct ConvGeometry {
  std::size_t cin, f, t, cout, kf, kt;
  std::size_t rows() const { return cin * kf * kt; }
  std::size_t cols() const { return f * t; }
};

template <class T>
ConvGeometry conv_geometry(const Shape &in, const Tensor<T> &weight,
                           const Tensor<T> &bias) {
  if (in.size() != 3 || weight.rank() != 4 || bias.rank() != 1)
    throw ShapeError("conv2d: expected input [C x F x T], weight "
                     "[Cout x Cin x KF x KT], bias [Cout]");
  ConvGeometry g{in[0], in[1], in[2], weight.dim(0), weight.dim(2),
                 weight.dim(3)};
  if (weight.dim(1) != g.cin)
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) +
                     " channels, weight expects " +
                     std::to_string(weight.dim(1)));
  if (bias.dim(0) != g.cout)
    throw ShapeError("conv2d: bias length does not match output channels");
  if (g.kf % 2 == 0 || g.kt % 2 == 0)
    throw ShapeError("conv2d: kernel extents must be odd");
  return g;
}

template <class T>
void im2col(const Tensor<T> &x, const ConvGeometry &g, Tensor<T> &cols) {
  const auto pf = static_cast<std::ptrdiff_t>(g.kf / 2);
  const auto pt = static_cast<std::ptrdiff_t>(g.kt / 2);
  const auto F = static_cast<std::ptrdiff_t>(g.f);
  const auto TT = static_cast<std::ptrdiff_t>(g.t);
  T *dst = cols.data();
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t a = 0; a < g.kf; ++a)
      for (std::size_t c = 0; c < g.kt; ++c) {
        const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(c) - pt;
        const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -dt);
        const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(TT, TT - dt);
        for (std::ptrdiff_t f = 0; f < F; ++f, dst += g.t) {
          const std::ptrdiff_t sf = f + static_cast<std::ptrdiff_t>(a) - pf;
          if (sf < 0 || sf >= F) {
            std::fill(dst, dst + g.t, T{0});
            continue;
          }
          const T *src = x.data() + (ci * g.f + static_cast<std::size_t>(sf)) * g.t;
          std::fill(dst, dst + t_lo, T{0});
          std::copy(src + t_lo + dt, src + t_hi + dt, dst + t_lo);
          std::fill(dst + t_hi, dst + TT, T{0});
        }
      }
}

template <class T>
void col2im(const Tensor<T> &cols, const ConvGeometry &g, Tensor<T> &dx) {
  const auto pf = static_cast<std::ptrdiff_t>(g.kf / 2);
  const auto pt = static_cast<std::ptrdiff_t>(g.kt / 2);
  const auto F = static_cast<std::ptrdiff_t>(g.f);
  const auto TT = static_cast<std::ptrdiff_t>(g.t);
  const T *src = cols.data();
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t a = 0; a < g.kf; ++a)
      for (std::size_t c = 0; c < g.kt; ++c) {
        const std::ptrdiff_t dt = static_cast<std::ptrdiff_t>(c) - pt;
        const std::ptrdiff_t t_lo = std::max<std::ptrdiff_t>(0, -dt);
        const std::ptrdiff_t t_hi = std::min<std::ptrdiff_t>(TT, TT - dt);
        for (std::ptrdiff_t f = 0; f < F; ++f, src += g.t) {
          const std::ptrdiff_t sf = f + static_cast<std::ptrdiff_t>(a) - pf;
          if (sf < 0 || sf >= F)
            continue;
          T *d = dx.data() + (ci * g.f + static_cast<std::size_t>(sf)) * g.t;
          for (std::ptrdiff_t t = t_lo; t < t_hi; ++t)
            d[t + dt] += src[t];
        }
      }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weight,
                 const Tensor<T> &bias, Conv2dCache<T> *cache) {
  const auto g = conv_geometry(input.shape(), weight, bias);
  Tensor<T> cols({g.rows(), g.cols()});
  im2col(input, g, cols);
  Tensor<T> out({g.cout, g.f, g.t});
  for (std::size_t o = 0; o < g.cout; ++o)
    std::fill(out.data() + o * g.cols(), out.data() + (o + 1) * g.cols(),
              bias[o]);
  simd::gemm_acc(g.cout, g.cols(), g.rows(), weight.data(),
                 static_cast<std::ptrdiff_t>(g.rows()), 1, cols.data(),
                 g.cols(), out.data(), g.cols());
  if (cache) {
    cache->input_shape = input.shape();
    cache->cols = std::move(cols);
  }
  return out;
}

template <class T>
Tensor<T> conv2d_backward(const Tensor<T> &grad_output, const Tensor<T> &weight,
                          const Conv2dCache<T> &cache, Tensor<T> &grad_weight,
                          Tensor<T> &grad_bias, bool need_input_grad) {
  const auto g = conv_geometry(cache.input_shape, weight, grad_bias);
  require_shape(grad_output, {g.cout, g.f, g.t}, "conv2d_backward grad_output");
  require_shape(grad_weight, weight.shape(), "conv2d_backward grad_weight");
  const std::size_t n = g.cols();
  for (std::size_t o = 0; o < g.cout; ++o) {
    const T *row = grad_output.data() + o * n;
    T s = 0;
    for (std::size_t j = 0; j < n; ++j)
      s += row[j];
    grad_bias[o] += s;
  }
  simd::gemm_nt_acc(g.cout, g.rows(), n, grad_output.data(), n,
                    cache.cols.data(), n, grad_weight.data(), g.rows());
  if (!need_input_grad)
    return {};
  Tensor<T> dcols({g.rows(), n});
  simd::gemm_acc(g.rows(), n, g.cout, weight.data(), 1,
                 static_cast<std::ptrdiff_t>(g.rows()), grad_output.data(), n,
                 dcols.data(), n);
  Tensor<T> dx(cache.input_shape);
  col2im(dcols, g, dx);
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU / pooling

template <class T> void relu_inplace(Tensor<T> &x) {
  for (auto &v : x.values())
    v = v > T{0} ? v : T{0};
}

template <class T>
void relu_backward_inplace(const Tensor<T> &output, Tensor<T> &grad) {
  require_shape(grad, output.shape(), "relu_backward grad");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(output[i] > T{0}))
      grad[i] = T{0};
}

template <class T>
Tensor<T> maxpool_freq(const Tensor<T> &input, std::size_t pool,
                       PoolCache *cache) {
  if (input.rank() != 3)
    throw ShapeError("maxpool_freq: expected [C x F x T]");
  const std::size_t C = input.dim(0), F = input.dim(1), TT = input.dim(2);
  if (pool == 0 || F % pool != 0)
    throw ShapeError("maxpool_freq: frequency extent " + std::to_string(F) +
                     " not divisible by pool " + std::to_string(pool));
  const std::size_t Fo = F / pool;
  Tensor<T> out({C, Fo, TT});
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax.assign(out.size(), 0);
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t fo = 0; fo < Fo; ++fo) {
      T *o = out.data() + (c * Fo + fo) * TT;
      const std::size_t base = (c * F + fo * pool) * TT;
      std::copy(input.data() + base, input.data() + base + TT, o);
      std::uint32_t *arg =
          cache ? cache->argmax.data() + (c * Fo + fo) * TT : nullptr;
      if (arg)
        for (std::size_t t = 0; t < TT; ++t)
          arg[t] = static_cast<std::uint32_t>(base + t);
      for (std::size_t j = 1; j < pool; ++j) {
        const T *row = input.data() + base + j * TT;
        for (std::size_t t = 0; t < TT; ++t)
          if (row[t] > o[t]) {
            o[t] = row[t];
            if (arg)
              arg[t] = static_cast<std::uint32_t>(base + j * TT + t);
          }
      }
    }
  return out;
}

template <class T>
Tensor<T> maxpool_freq_backward(const Tensor<T> &grad_output,
                                const PoolCache &cache) {
  if (grad_output.size() != cache.argmax.size())
    throw ShapeError("maxpool_freq_backward: gradient does not match cache");
  Tensor<T> dx(cache.input_shape);
  for (std::size_t i = 0; i < grad_output.size(); ++i)
    dx[cache.argmax[i]] += grad_output[i];
  return dx;
}

// ---------------------------------------------------------------------------
// bidirectional GRU

namespace {

template <class T>
std::size_t gru_hidden_size(const Tensor<T> &input, GruWeights<T> w) {
  if (input.rank() != 2)
    throw ShapeError("bigru: input must be [T x D]");
  if (w.w_hidden.rank() != 2 || w.w_hidden.dim(0) != 3 * w.w_hidden.dim(1))
    throw ShapeError("bigru: w_hidden must be [3H x H]");
  const std::size_t H = w.w_hidden.dim(1);
  require_shape(w.w_input, {3 * H, input.dim(1)}, "bigru w_input");
  require_shape(w.bias, {3 * H}, "bigru bias");
  return H;
}

template <class T>
void gru_direction_forward(const Tensor<T> &x, GruWeights<T> w, bool reverse,
                           T *out, std::size_t out_stride,
                           GruDirectionCache<T> *cache) {
  const std::size_t TT = x.dim(0), D = x.dim(1);
  const std::size_t H = w.w_hidden.dim(1), G = 3 * H;
  Tensor<T> xp({TT, G});
  for (std::size_t t = 0; t < TT; ++t)
    std::copy(w.bias.data(), w.bias.data() + G, xp.data() + t * G);
  simd::gemm_nt_acc(TT, G, D, x.data(), D, w.w_input.data(), D, xp.data(), G);
  if (cache) {
    cache->gates = Tensor<T>({TT, G});
    cache->h_prev = Tensor<T>({TT, H});
    cache->r_h = Tensor<T>({TT, H});
  }
  std::vector<T> h(H, T{0}), uh(2 * H), un(H), rh(H);
  const T *u_zr = w.w_hidden.data();
  const T *u_n = w.w_hidden.data() + 2 * H * H;
  for (std::size_t s = 0; s < TT; ++s) {
    const std::size_t t = reverse ? TT - 1 - s : s;
    const T *xt = xp.data() + t * G;
    std::fill(uh.begin(), uh.end(), T{0});
    simd::gemm_nt_acc(1, 2 * H, H, h.data(), H, u_zr, H, uh.data(), 2 * H);
    T *gates = cache ? cache->gates.data() + t * G : nullptr;
    if (cache)
      std::copy(h.begin(), h.end(), cache->h_prev.data() + t * H);
    std::vector<T> z(H), r(H);
    for (std::size_t i = 0; i < H; ++i) {
      z[i] = sigmoid(xt[i] + uh[i]);
      r[i] = sigmoid(xt[H + i] + uh[H + i]);
      rh[i] = r[i] * h[i];
    }
    std::fill(un.begin(), un.end(), T{0});
    simd::gemm_nt_acc(1, H, H, rh.data(), H, u_n, H, un.data(), H);
    for (std::size_t i = 0; i < H; ++i) {
      const T n = std::tanh(xt[2 * H + i] + un[i]);
      h[i] = (T{1} - z[i]) * h[i] + z[i] * n;
      out[t * out_stride + i] = h[i];
      if (gates) {
        gates[i] = z[i];
        gates[H + i] = r[i];
        gates[2 * H + i] = n;
      }
    }
    if (cache)
      std::copy(rh.begin(), rh.end(), cache->r_h.data() + t * H);
  }
}

template <class T>
void gru_direction_backward(const Tensor<T> &x, const T *grad_out,
                            std::size_t grad_stride, GruWeights<T> w,
                            bool reverse, const GruDirectionCache<T> &cache,
                            GruGrads<T> grads, T *dx) {
  const std::size_t TT = x.dim(0), D = x.dim(1);
  const std::size_t H = w.w_hidden.dim(1), G = 3 * H;
  Tensor<T> da({TT, G});
  std::vector<T> dh(H, T{0}), dhp(H), drh(H);
  const T *u_zr = w.w_hidden.data();
  const T *u_n = w.w_hidden.data() + 2 * H * H;
  for (std::size_t s = 0; s < TT; ++s) {
    const std::size_t t = reverse ? s : TT - 1 - s;
    const T *g = cache.gates.data() + t * G;
    const T *hp = cache.h_prev.data() + t * H;
    T *a = da.data() + t * G;
    for (std::size_t i = 0; i < H; ++i) {
      dh[i] += grad_out[t * grad_stride + i];
      const T z = g[i], n = g[2 * H + i];
      a[2 * H + i] = dh[i] * z * (T{1} - n * n);
      a[i] = dh[i] * (n - hp[i]) * z * (T{1} - z);
      dhp[i] = dh[i] * (T{1} - z);
    }
    std::fill(drh.begin(), drh.end(), T{0});
    simd::gemm_acc(1, H, H, a + 2 * H, 0, 1, u_n, H, drh.data(), H);
    for (std::size_t i = 0; i < H; ++i) {
      const T r = g[H + i];
      a[H + i] = drh[i] * hp[i] * r * (T{1} - r);
      dhp[i] += drh[i] * r;
    }
    simd::gemm_acc(1, H, 2 * H, a, 0, 1, u_zr, H, dhp.data(), H);
    dh.swap(dhp);
  }
  for (std::size_t t = 0; t < TT; ++t)
    for (std::size_t j = 0; j < G; ++j)
      grads.bias[j] += da[t * G + j];
  const auto G_ = static_cast<std::ptrdiff_t>(G);
  simd::gemm_acc(G, D, TT, da.data(), 1, G_, x.data(), D,
                 grads.w_input.data(), D);
  simd::gemm_acc(2 * H, H, TT, da.data(), 1, G_, cache.h_prev.data(), H,
                 grads.w_hidden.data(), H);
  simd::gemm_acc(H, H, TT, da.data() + 2 * H, 1, G_, cache.r_h.data(), H,
                 grads.w_hidden.data() + 2 * H * H, H);
  if (dx)
    simd::gemm_acc(TT, D, G, da.data(), G_, 1, w.w_input.data(), D, dx, D);
}

}  // namespace

template <class T>
Tensor<T> bigru(const Tensor<T> &input, GruWeights<T> forward,
                GruWeights<T> backward, BiGruCache<T> *cache) {
  const std::size_t H = gru_hidden_size(input, forward);
  if (gru_hidden_size(input, backward) != H)
    throw ShapeError("bigru: directions disagree on hidden size");
  if (input.dim(0) == 0)
    throw ShapeError("bigru: empty sequence");
  const std::size_t TT = input.dim(0);
  Tensor<T> out({TT, 2 * H});
  gru_direction_forward(input, forward, false, out.data(), 2 * H,
                        cache ? &cache->forward : nullptr);
  gru_direction_forward(input, backward, true, out.data() + H, 2 * H,
                        cache ? &cache->backward : nullptr);
  if (cache)
    cache->input = input;
  return out;
}

template <class T>
Tensor<T> bigru_backward(const Tensor<T> &grad_output, GruWeights<T> forward,
                         GruWeights<T> backward, const BiGruCache<T> &cache,
                         GruGrads<T> grad_forward, GruGrads<T> grad_backward,
                         bool need_input_grad) {
  const auto &x = cache.input;
  const std::size_t H = gru_hidden_size(x, forward);
  require_shape(grad_output, {x.dim(0), 2 * H}, "bigru_backward grad_output");
  Tensor<T> dx;
  if (need_input_grad)
    dx = Tensor<T>(x.shape());
  gru_direction_backward(x, grad_output.data(), 2 * H, forward, false,
                         cache.forward, grad_forward,
                         need_input_grad ? dx.data() : nullptr);
  gru_direction_backward(x, grad_output.data() + H, 2 * H, backward, true,
                         cache.backward, grad_backward,
                         need_input_grad ? dx.data() : nullptr);
  return dx;
}

// ---------------------------------------------------------------------------
// linear + sigmoid

template <class T>
Tensor<T> linear_sigmoid(const Tensor<T> &input, const Tensor<T> &weight,
                         const Tensor<T> &bias, LinearCache<T> *cache) {
  if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1)
    throw ShapeError("linear_sigmoid: expected input [T x D], weight [C x D], "
                     "bias [C]");
  const std::size_t TT = input.dim(0), D = input.dim(1), C = weight.dim(0);
  if (weight.dim(1) != D || bias.dim(0) != C)
    throw ShapeError("linear_sigmoid: input " + shape_string(input.shape()) +
                     " incompatible with weight " +
                     shape_string(weight.shape()));
  Tensor<T> out({TT, C});
  for (std::size_t t = 0; t < TT; ++t)
    std::copy(bias.data(), bias.data() + C, out.data() + t * C);
  simd::gemm_nt_acc(TT, C, D, input.data(), D, weight.data(), D, out.data(), C);
  for (auto &v : out.values())
    v = sigmoid(v);
  if (cache) {
    cache->input = input;
    cache->output = out;
  }
  return out;
}

template <class T>
Tensor<T> linear_sigmoid_backward(const Tensor<T> &grad_output,
                                  const Tensor<T> &weight,
                                  const LinearCache<T> &cache,
                                  Tensor<T> &grad_weight, Tensor<T> &grad_bias,
                                  bool need_input_grad) {
  const auto &x = cache.input;
  const auto &y = cache.output;
  require_shape(grad_output, y.shape(), "linear_sigmoid_backward grad_output");
  require_shape(grad_weight, weight.shape(), "linear_sigmoid_backward grad_weight");
  const std::size_t TT = x.dim(0), D = x.dim(1), C = weight.dim(0);
  Tensor<T> dz(y.shape());
  for (std::size_t i = 0; i < dz.size(); ++i)
    dz[i] = grad_output[i] * y[i] * (T{1} - y[i]);
  for (std::size_t t = 0; t < TT; ++t)
    for (std::size_t c = 0; c < C; ++c)
      grad_bias[c] += dz[t * C + c];
  simd::gemm_acc(C, D, TT, dz.data(), 1, static_cast<std::ptrdiff_t>(C),
                 x.data(), D, grad_weight.data(), D);
  if (!need_input_grad)
    return {};
  Tensor<T> dx({TT, D});
  simd::gemm_acc(TT, D, C, dz.data(), static_cast<std::ptrdiff_t>(C), 1,
                 weight.data(), D, dx.data(), D);
  return dx;
}

#define STDET_INSTANTIATE_LAYERS(T)                                            \
  template T sigmoid<T>(T);                                                    \
  template Tensor<T> transpose2d<T>(const Tensor<T> &);                        \
  template Tensor<T> conv2d<T>(const Tensor<T> &, const Tensor<T> &,           \
                               const Tensor<T> &, Conv2dCache<T> *);           \
  template Tensor<T> conv2d_backward<T>(const Tensor<T> &, const Tensor<T> &,  \
                                        const Conv2dCache<T> &, Tensor<T> &,   \
                                        Tensor<T> &, bool);                    \
  template void relu_inplace<T>(Tensor<T> &);                                  \
  template void relu_backward_inplace<T>(const Tensor<T> &, Tensor<T> &);      \
  template Tensor<T> maxpool_freq<T>(const Tensor<T> &, std::size_t,           \
                                     PoolCache *);                             \
  template Tensor<T> maxpool_freq_backward<T>(const Tensor<T> &,               \
                                              const PoolCache &);              \
  template Tensor<T> bigru<T>(const Tensor<T> &, GruWeights<T>, GruWeights<T>, \
                              BiGruCache<T> *);                                \
  template Tensor<T> bigru_backward<T>(const Tensor<T> &, GruWeights<T>,       \
                                       GruWeights<T>, const BiGruCache<T> &,   \
                                       GruGrads<T>, GruGrads<T>, bool);        \
  template Tensor<T> linear_sigmoid<T>(const Tensor<T> &, const Tensor<T> &,   \
                                       const Tensor<T> &, LinearCache<T> *);   \
  template Tensor<T> linear_sigmoid_backward<T>(                               \
      const Tensor<T> &, const Tensor<T> &, const LinearCache<T> &,            \
      Tensor<T> &, Tensor<T> &, bool);

STDET_INSTANTIATE_LAYERS(float)
STDET_INSTANTIATE_LAYERS(double)

#undef STDET_INSTANTIATE_LAYERS

}  // namespace stdet::nn
