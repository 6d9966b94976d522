// SPDX-License-Identifier: Apache-2.0
/**
 * @file   kernels_avx2.cpp
 * @brief  AVX2/FMA kernels. This translation unit is compiled with
 *         -mavx2 -mfma and must only be entered after the dispatcher has
 *         confirmed CPU support.
 *
 * N.B. Keep standard-library headers out of this file. Inline functions
 * instantiated here would carry AVX2 code and could be picked by the linker
 * for callers in baseline translation units.
 */
#include "stdet/simd.hpp"

#if defined(STDET_HAVE_AVX2)

#include <immintrin.h>

namespace stdet::simd::avx2 {

namespace {

struct VecF {
  using T = float;
  using R = __m256;
  static constexpr std::size_t W = 8;
  static R load(const T *p) { return _mm256_loadu_ps(p); }
  static void store(T *p, R v) { _mm256_storeu_ps(p, v); }
  static R bcast(T x) { return _mm256_set1_ps(x); }
  static R zero() { return _mm256_setzero_ps(); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_ps(a, b, c); }
  static R add(R a, R b) { return _mm256_add_ps(a, b); }
  static T hsum(R v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
  }
};

struct VecD {
  using T = double;
  using R = __m256d;
  static constexpr std::size_t W = 4;
  static R load(const T *p) { return _mm256_loadu_pd(p); }
  static void store(T *p, R v) { _mm256_storeu_pd(p, v); }
  static R bcast(T x) { return _mm256_set1_pd(x); }
  static R zero() { return _mm256_setzero_pd(); }
  static R fma(R a, R b, R c) { return _mm256_fmadd_pd(a, b, c); }
  static R add(R a, R b) { return _mm256_add_pd(a, b); }
  static T hsum(R v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

template <class V>
typename V::T dot_impl(const typename V::T *a, const typename V::T *b,
                       std::size_t n) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  auto s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * W <= n; i += 4 * W) {
    s0 = V::fma(V::load(a + i), V::load(b + i), s0);
    s1 = V::fma(V::load(a + i + W), V::load(b + i + W), s1);
    s2 = V::fma(V::load(a + i + 2 * W), V::load(b + i + 2 * W), s2);
    s3 = V::fma(V::load(a + i + 3 * W), V::load(b + i + 3 * W), s3);
  }
  for (; i + W <= n; i += W)
    s0 = V::fma(V::load(a + i), V::load(b + i), s0);
  T s = V::hsum(V::add(V::add(s0, s1), V::add(s2, s3)));
  for (; i < n; ++i)
    s += a[i] * b[i];
  return s;
}

template <class V>
void axpy_impl(typename V::T alpha, const typename V::T *x, typename V::T *y,
               std::size_t n) {
  constexpr std::size_t W = V::W;
  const auto va = V::bcast(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W)
    V::store(y + i, V::fma(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i)
    y[i] += alpha * x[i];
}

// Register-blocked C += A * B. Column panels of 4 vectors are the outer loop
// so the k x 4W panel of B stays hot while every row of A streams past it.
template <class V>
void gemm_acc_impl(std::size_t m, std::size_t n, std::size_t k,
                   const typename V::T *a, std::ptrdiff_t ar,
                   std::ptrdiff_t ac, const typename V::T *b, std::size_t ldb,
                   typename V::T *c, std::size_t ldc) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  constexpr std::size_t NB = 4 * W;
  const auto row = [&](std::size_t i) {
    return a + static_cast<std::ptrdiff_t>(i) * ar;
  };

  std::size_t j = 0;
  for (; j + NB <= n; j += NB) {
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
      const T *a0 = row(i);
      const T *a1 = row(i + 1);
      T *c0 = c + i * ldc + j;
      T *c1 = c0 + ldc;
      auto x00 = V::load(c0), x01 = V::load(c0 + W);
      auto x02 = V::load(c0 + 2 * W), x03 = V::load(c0 + 3 * W);
      auto x10 = V::load(c1), x11 = V::load(c1 + W);
      auto x12 = V::load(c1 + 2 * W), x13 = V::load(c1 + 3 * W);
      const T *bp = b + j;
      std::ptrdiff_t off = 0;
      for (std::size_t p = 0; p < k; ++p, bp += ldb, off += ac) {
        const auto b0 = V::load(bp), b1 = V::load(bp + W);
        const auto b2 = V::load(bp + 2 * W), b3 = V::load(bp + 3 * W);
        const auto s0 = V::bcast(a0[off]);
        const auto s1 = V::bcast(a1[off]);
        x00 = V::fma(s0, b0, x00);
        x01 = V::fma(s0, b1, x01);
        x02 = V::fma(s0, b2, x02);
        x03 = V::fma(s0, b3, x03);
        x10 = V::fma(s1, b0, x10);
        x11 = V::fma(s1, b1, x11);
        x12 = V::fma(s1, b2, x12);
        x13 = V::fma(s1, b3, x13);
      }
      V::store(c0, x00);
      V::store(c0 + W, x01);
      V::store(c0 + 2 * W, x02);
      V::store(c0 + 3 * W, x03);
      V::store(c1, x10);
      V::store(c1 + W, x11);
      V::store(c1 + 2 * W, x12);
      V::store(c1 + 3 * W, x13);
    }
    if (i < m) {
      const T *a0 = row(i);
      T *c0 = c + i * ldc + j;
      auto x0 = V::load(c0), x1 = V::load(c0 + W);
      auto x2 = V::load(c0 + 2 * W), x3 = V::load(c0 + 3 * W);
      const T *bp = b + j;
      std::ptrdiff_t off = 0;
      for (std::size_t p = 0; p < k; ++p, bp += ldb, off += ac) {
        const auto s0 = V::bcast(a0[off]);
        x0 = V::fma(s0, V::load(bp), x0);
        x1 = V::fma(s0, V::load(bp + W), x1);
        x2 = V::fma(s0, V::load(bp + 2 * W), x2);
        x3 = V::fma(s0, V::load(bp + 3 * W), x3);
      }
      V::store(c0, x0);
      V::store(c0 + W, x1);
      V::store(c0 + 2 * W, x2);
      V::store(c0 + 3 * W, x3);
    }
  }
  for (; j + W <= n; j += W) {
    for (std::size_t i = 0; i < m; ++i) {
      const T *a0 = row(i);
      T *c0 = c + i * ldc + j;
      auto x0 = V::load(c0);
      const T *bp = b + j;
      std::ptrdiff_t off = 0;
      for (std::size_t p = 0; p < k; ++p, bp += ldb, off += ac)
        x0 = V::fma(V::bcast(a0[off]), V::load(bp), x0);
      V::store(c0, x0);
    }
  }
  for (; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      const T *a0 = row(i);
      T s = c[i * ldc + j];
      std::ptrdiff_t off = 0;
      for (std::size_t p = 0; p < k; ++p, off += ac)
        s += a0[off] * b[p * ldb + j];
      c[i * ldc + j] = s;
    }
  }
}

// C += A * B^T as blocks of 2x4 simultaneous dot products, chunked along the
// reduction axis so both operand slices stay cache resident.
template <class V>
void gemm_nt_acc_impl(std::size_t m, std::size_t n, std::size_t k,
                      const typename V::T *a, std::size_t lda,
                      const typename V::T *b, std::size_t ldb,
                      typename V::T *c, std::size_t ldc) {
  using T = typename V::T;
  constexpr std::size_t W = V::W;
  constexpr std::size_t KC = 512;
  for (std::size_t p0 = 0; p0 < k; p0 += KC) {
    const std::size_t kc = (k - p0 < KC) ? k - p0 : KC;
    const std::size_t kv = kc - kc % W;
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
      const T *a0 = a + i * lda + p0;
      const T *a1 = a0 + lda;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const T *b0 = b + j * ldb + p0;
        const T *b1 = b0 + ldb;
        const T *b2 = b1 + ldb;
        const T *b3 = b2 + ldb;
        auto s00 = V::zero(), s01 = V::zero(), s02 = V::zero(),
             s03 = V::zero();
        auto s10 = V::zero(), s11 = V::zero(), s12 = V::zero(),
             s13 = V::zero();
        for (std::size_t p = 0; p < kv; p += W) {
          const auto va0 = V::load(a0 + p), va1 = V::load(a1 + p);
          const auto vb0 = V::load(b0 + p), vb1 = V::load(b1 + p);
          const auto vb2 = V::load(b2 + p), vb3 = V::load(b3 + p);
          s00 = V::fma(va0, vb0, s00);
          s01 = V::fma(va0, vb1, s01);
          s02 = V::fma(va0, vb2, s02);
          s03 = V::fma(va0, vb3, s03);
          s10 = V::fma(va1, vb0, s10);
          s11 = V::fma(va1, vb1, s11);
          s12 = V::fma(va1, vb2, s12);
          s13 = V::fma(va1, vb3, s13);
        }
        T r[2][4] = {{V::hsum(s00), V::hsum(s01), V::hsum(s02), V::hsum(s03)},
                     {V::hsum(s10), V::hsum(s11), V::hsum(s12), V::hsum(s13)}};
        for (std::size_t p = kv; p < kc; ++p) {
          r[0][0] += a0[p] * b0[p];
          r[0][1] += a0[p] * b1[p];
          r[0][2] += a0[p] * b2[p];
          r[0][3] += a0[p] * b3[p];
          r[1][0] += a1[p] * b0[p];
          r[1][1] += a1[p] * b1[p];
          r[1][2] += a1[p] * b2[p];
          r[1][3] += a1[p] * b3[p];
        }
        T *c0 = c + i * ldc + j;
        T *c1 = c0 + ldc;
        for (int q = 0; q < 4; ++q) {
          c0[q] += r[0][q];
          c1[q] += r[1][q];
        }
      }
      for (; j < n; ++j) {
        const T *b0 = b + j * ldb + p0;
        c[i * ldc + j] += dot_impl<V>(a0, b0, kc);
        c[(i + 1) * ldc + j] += dot_impl<V>(a1, b0, kc);
      }
    }
    for (; i < m; ++i) {
      const T *a0 = a + i * lda + p0;
      for (std::size_t j = 0; j < n; ++j)
        c[i * ldc + j] += dot_impl<V>(a0, b + j * ldb + p0, kc);
    }
  }
}

}  // namespace

float dot(const float *a, const float *b, std::size_t n) {
  return dot_impl<VecF>(a, b, n);
}
double dot(const double *a, const double *b, std::size_t n) {
  return dot_impl<VecD>(a, b, n);
}
void axpy(float alpha, const float *x, float *y, std::size_t n) {
  axpy_impl<VecF>(alpha, x, y, n);
}
void axpy(double alpha, const double *x, double *y, std::size_t n) {
  axpy_impl<VecD>(alpha, x, y, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const float *b,
              std::size_t ldb, float *c, std::size_t ldc) {
  gemm_acc_impl<VecF>(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const double *b,
              std::size_t ldb, double *c, std::size_t ldc) {
  gemm_acc_impl<VecD>(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
                 std::size_t lda, const float *b, std::size_t ldb, float *c,
                 std::size_t ldc) {
  gemm_nt_acc_impl<VecF>(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
                 std::size_t lda, const double *b, std::size_t ldb, double *c,
                 std::size_t ldc) {
  gemm_nt_acc_impl<VecD>(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace stdet::simd::avx2

#else  // !STDET_HAVE_AVX2

// Built without the AVX2 variant: the symbols still exist so the dispatcher
// links, but the dispatcher never selects them.
#include "stdet/simd.hpp"

namespace stdet::simd::avx2 {

float dot(const float *a, const float *b, std::size_t n) {
  return scalar::dot(a, b, n);
}
double dot(const double *a, const double *b, std::size_t n) {
  return scalar::dot(a, b, n);
}
void axpy(float alpha, const float *x, float *y, std::size_t n) {
  scalar::axpy(alpha, x, y, n);
}
void axpy(double alpha, const double *x, double *y, std::size_t n) {
  scalar::axpy(alpha, x, y, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const float *b,
              std::size_t ldb, float *c, std::size_t ldc) {
  scalar::gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const double *b,
              std::size_t ldb, double *c, std::size_t ldc) {
  scalar::gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
                 std::size_t lda, const float *b, std::size_t ldb, float *c,
                 std::size_t ldc) {
  scalar::gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
                 std::size_t lda, const double *b, std::size_t ldb, double *c,
                 std::size_t ldc) {
  scalar::gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace stdet::simd::avx2

#endif
