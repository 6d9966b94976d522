// SPDX-License-Identifier: Apache-2.0
/**
 * @file   layers.hpp
 * @brief  Forward and analytic backward passes for the CRNN building blocks.
 *
 * Backward functions accumulate into parameter gradients (+=) so several
 * sequences can share one optimizer step. Input gradients are returned
 * fresh. All functions are instantiated for float (training) and double
 * (gradient checking).
 */
#ifndef STDET_NN_LAYERS_HPP_
#define STDET_NN_LAYERS_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stdet/tensor.hpp"

namespace stdet::nn {

// --- 2-D convolution --------------------------------------------------------
//   input  [C_in x F x T], weight [C_out x C_in x KF x KT] (odd KF, KT),
//   bias [C_out]; stride 1, zero "same" padding, output [C_out x F x T].

template <class T> struct Conv2dCache {
  Shape input_shape;
  Tensor<T> cols;  ///< im2col buffer [C_in*KF*KT x F*T]
};

template <class T>
Tensor<T> conv2d(const Tensor<T> &input, const Tensor<T> &weight,
                 const Tensor<T> &bias, Conv2dCache<T> *cache = nullptr);

/// Returns dL/dinput when `need_input_grad`, otherwise an empty tensor.
template <class T>
Tensor<T> conv2d_backward(const Tensor<T> &grad_output, const Tensor<T> &weight,
                          const Conv2dCache<T> &cache, Tensor<T> &grad_weight,
                          Tensor<T> &grad_bias, bool need_input_grad = true);

// --- ReLU and frequency max-pooling ---------------------------------------

template <class T> void relu_inplace(Tensor<T> &x);
/// grad *= (output > 0)
template <class T>
void relu_backward_inplace(const Tensor<T> &output, Tensor<T> &grad);

struct PoolCache {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  ///< flat input index per output cell
};

/// [C x F x T] -> [C x F/pool x T]; F must be divisible by pool. Ties go to
/// the lowest frequency index.
template <class T>
Tensor<T> maxpool_freq(const Tensor<T> &input, std::size_t pool,
                       PoolCache *cache = nullptr);
template <class T>
Tensor<T> maxpool_freq_backward(const Tensor<T> &grad_output,
                                const PoolCache &cache);

// --- Bidirectional GRU ------------------------------------------------------
//   z  = sigmoid(Wz x + Uz h + bz)
//   r  = sigmoid(Wr x + Ur h + br)
//   n  = tanh(Wn x + Un (r * h) + bn)
//   h' = (1 - z) * h + z * n
// Gate blocks are stacked in the order z, r, n: w_input [3H x D],
// w_hidden [3H x H], bias [3H]. Initial state is zero. Output [T x 2H] is the
// forward state followed by the backward state for each timestep.

template <class T> struct GruWeights {
  const Tensor<T> &w_input;
  const Tensor<T> &w_hidden;
  const Tensor<T> &bias;
};

template <class T> struct GruGrads {
  Tensor<T> &w_input;
  Tensor<T> &w_hidden;
  Tensor<T> &bias;
};

template <class T> struct GruDirectionCache {
  Tensor<T> gates;   ///< [T x 3H] post-activation z, r, n
  Tensor<T> h_prev;  ///< [T x H] state entering each timestep
  Tensor<T> r_h;     ///< [T x H] r * h_prev
};

template <class T> struct BiGruCache {
  Tensor<T> input;
  GruDirectionCache<T> forward;
  GruDirectionCache<T> backward;
};

template <class T>
Tensor<T> bigru(const Tensor<T> &input, GruWeights<T> forward,
                GruWeights<T> backward, BiGruCache<T> *cache = nullptr);

template <class T>
Tensor<T> bigru_backward(const Tensor<T> &grad_output, GruWeights<T> forward,
                         GruWeights<T> backward, const BiGruCache<T> &cache,
                         GruGrads<T> grad_forward, GruGrads<T> grad_backward,
                         bool need_input_grad = true);

// --- Fully connected + sigmoid ---------------------------------------------
//   input [T x D], weight [C x D], bias [C] -> output [T x C] in (0, 1)

template <class T> struct LinearCache {
  Tensor<T> input;
  Tensor<T> output;
};

template <class T>
Tensor<T> linear_sigmoid(const Tensor<T> &input, const Tensor<T> &weight,
                         const Tensor<T> &bias, LinearCache<T> *cache = nullptr);

/// `grad_output` is dL/d(sigmoid output).
template <class T>
Tensor<T> linear_sigmoid_backward(const Tensor<T> &grad_output,
                                  const Tensor<T> &weight,
                                  const LinearCache<T> &cache,
                                  Tensor<T> &grad_weight, Tensor<T> &grad_bias,
                                  bool need_input_grad = true);

template <class T> T sigmoid(T x);

/// [A x B] -> [B x A]
template <class T> Tensor<T> transpose2d(const Tensor<T> &x);

}  // namespace stdet::nn

#endif  // STDET_NN_LAYERS_HPP_
