// SPDX-License-Identifier: Apache-2.0
/**
 * @file   kernels_scalar.cpp
 * @brief  Portable reference kernels. Straight loops, one accumulator per
 *         output element, summation in index order.
 */
#include "stdet/simd.hpp"

namespace stdet::simd::scalar {

namespace {

template <class T> T dot_impl(const T *a, const T *b, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i)
    s += a[i] * b[i];
  return s;
}

template <class T> void axpy_impl(T alpha, const T *x, T *y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    y[i] += alpha * x[i];
}

template <class T>
void gemm_acc_impl(std::size_t m, std::size_t n, std::size_t k, const T *a,
                   std::ptrdiff_t ar, std::ptrdiff_t ac, const T *b,
                   std::size_t ldb, T *c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T *crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[static_cast<std::ptrdiff_t>(i) * ar +
                      static_cast<std::ptrdiff_t>(p) * ac];
      const T *brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += aip * brow[j];
    }
  }
}

template <class T>
void gemm_nt_acc_impl(std::size_t m, std::size_t n, std::size_t k, const T *a,
                      std::size_t lda, const T *b, std::size_t ldb, T *c,
                      std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c[i * ldc + j] += dot_impl(a + i * lda, b + j * ldb, k);
}

}  // namespace

float dot(const float *a, const float *b, std::size_t n) {
  return dot_impl(a, b, n);
}
double dot(const double *a, const double *b, std::size_t n) {
  return dot_impl(a, b, n);
}
void axpy(float alpha, const float *x, float *y, std::size_t n) {
  axpy_impl(alpha, x, y, n);
}
void axpy(double alpha, const double *x, double *y, std::size_t n) {
  axpy_impl(alpha, x, y, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const float *b,
              std::size_t ldb, float *c, std::size_t ldc) {
  gemm_acc_impl(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const double *b,
              std::size_t ldb, double *c, std::size_t ldc) {
  gemm_acc_impl(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
                 std::size_t lda, const float *b, std::size_t ldb, float *c,
                 std::size_t ldc) {
  gemm_nt_acc_impl(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
                 std::size_t lda, const double *b, std::size_t ldb, double *c,
                 std::size_t ldc) {
  gemm_nt_acc_impl(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace stdet::simd::scalar
