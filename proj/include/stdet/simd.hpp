// SPDX-License-Identifier: Apache-2.0
/**
 * @file   simd.hpp
 * @brief  Dense arithmetic kernels with a scalar reference implementation and
 *         an AVX2/FMA variant chosen at runtime.
 *
 * Every kernel exists in two namespaces with identical signatures:
 * `stdet::simd::scalar` (portable reference) and `stdet::simd::avx2`
 * (only callable when the CPU reports avx2 and fma). The unqualified
 * functions in `stdet::simd` forward to whichever ISA is active. The active
 * ISA is process-global; switching it between two runs changes rounding, so
 * bit-determinism holds per ISA, not across ISAs.
 */
#ifndef STDET_SIMD_HPP_
#define STDET_SIMD_HPP_

#include <cstddef>
#include <string_view>

namespace stdet::simd {

enum class Isa { scalar, avx2 };

/// Best ISA supported by the running CPU and by this build.
Isa detected_isa();
Isa active_isa();
/// Throws std::invalid_argument when `isa` is not supported here.
void set_active_isa(Isa isa);
std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);

/// RAII guard that switches the active ISA for a scope.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active_isa(isa); }
  ~ScopedIsa() { set_active_isa(previous_); }
  ScopedIsa(const ScopedIsa &) = delete;
  ScopedIsa &operator=(const ScopedIsa &) = delete;

 private:
  Isa previous_;
};

// Kernel signatures. Matrices are addressed through raw pointers plus leading
// dimensions because callers routinely pass sub-blocks and transposed views.
//
//   dot(a, b, n)                      = sum_i a[i] * b[i]
//   axpy(alpha, x, y, n)              : y[i] += alpha * x[i]
//   gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc)
//       C[i][j] += sum_p A(i, p) * B[p][j],  A(i, p) = a[i * ar + p * ac]
//   gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc)
//       C[i][j] += sum_p A[i][p] * B[j][p]
#define STDET_SIMD_DECLARE_KERNELS                                            \
  float dot(const float *a, const float *b, std::size_t n);                  \
  double dot(const double *a, const double *b, std::size_t n);               \
  void axpy(float alpha, const float *x, float *y, std::size_t n);           \
  void axpy(double alpha, const double *x, double *y, std::size_t n);        \
  void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float *a, \
                std::ptrdiff_t ar, std::ptrdiff_t ac, const float *b,        \
                std::size_t ldb, float *c, std::size_t ldc);                 \
  void gemm_acc(std::size_t m, std::size_t n, std::size_t k,                 \
                const double *a, std::ptrdiff_t ar, std::ptrdiff_t ac,       \
                const double *b, std::size_t ldb, double *c,                 \
                std::size_t ldc);                                            \
  void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k,              \
                   const float *a, std::size_t lda, const float *b,          \
                   std::size_t ldb, float *c, std::size_t ldc);              \
  void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k,              \
                   const double *a, std::size_t lda, const double *b,        \
                   std::size_t ldb, double *c, std::size_t ldc);

namespace scalar {
STDET_SIMD_DECLARE_KERNELS
}  // namespace scalar

namespace avx2 {
STDET_SIMD_DECLARE_KERNELS
}  // namespace avx2

STDET_SIMD_DECLARE_KERNELS

#undef STDET_SIMD_DECLARE_KERNELS

}  // namespace stdet::simd

#endif  // STDET_SIMD_HPP_
