// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "stdet/simd.hpp"

namespace stdet::simd {

namespace {

bool cpu_has_avx2_fma() {
#if defined(STDET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__)) && \
    (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

// STDET_ISA=scalar in the environment pins the reference kernels.
Isa initial_isa() {
  const Isa best = cpu_has_avx2_fma() ? Isa::avx2 : Isa::scalar;
  if (const char *env = std::getenv("STDET_ISA")) {
    const std::string v(env);
    if (v == "scalar")
      return Isa::scalar;
  }
  return best;
}

std::atomic<Isa> &active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

bool use_avx2() { return active().load(std::memory_order_relaxed) == Isa::avx2; }

}  // namespace

Isa detected_isa() { return cpu_has_avx2_fma() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() { return active().load(); }

bool isa_supported(Isa isa) {
  return isa == Isa::scalar || (isa == Isa::avx2 && cpu_has_avx2_fma());
}

void set_active_isa(Isa isa) {
  if (!isa_supported(isa))
    throw std::invalid_argument("ISA not supported on this CPU/build: " +
                                std::string(isa_name(isa)));
  active().store(isa);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
  case Isa::scalar:
    return "scalar";
  case Isa::avx2:
    return "avx2";
  }
  return "unknown";
}

float dot(const float *a, const float *b, std::size_t n) {
  return use_avx2() ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}
double dot(const double *a, const double *b, std::size_t n) {
  return use_avx2() ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}
void axpy(float alpha, const float *x, float *y, std::size_t n) {
  use_avx2() ? avx2::axpy(alpha, x, y, n) : scalar::axpy(alpha, x, y, n);
}
void axpy(double alpha, const double *x, double *y, std::size_t n) {
  use_avx2() ? avx2::axpy(alpha, x, y, n) : scalar::axpy(alpha, x, y, n);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const float *b,
              std::size_t ldb, float *c, std::size_t ldc) {
  use_avx2() ? avx2::gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc)
             : scalar::gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
              std::ptrdiff_t ar, std::ptrdiff_t ac, const double *b,
              std::size_t ldb, double *c, std::size_t ldc) {
  use_avx2() ? avx2::gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc)
             : scalar::gemm_acc(m, n, k, a, ar, ac, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const float *a,
                 std::size_t lda, const float *b, std::size_t ldb, float *c,
                 std::size_t ldc) {
  use_avx2() ? avx2::gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc)
             : scalar::gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double *a,
                 std::size_t lda, const double *b, std::size_t ldb, double *c,
                 std::size_t ldc) {
  use_avx2() ? avx2::gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc)
             : scalar::gemm_nt_acc(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace stdet::simd
