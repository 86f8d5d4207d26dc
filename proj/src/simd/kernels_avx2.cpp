#if defined(__x86_64__) || defined(__i386__)

#include "kernels_impl.hpp"

#include <immintrin.h>

#define FLATPI_AVX2 __attribute__((target("avx2")))

namespace flatpi::simd::detail {
namespace {

FLATPI_AVX2 void relu_forward(const double* W1, const double* b1, const double* w2, double b2, int n0, int n1,
                              const double* pts, long count, long stride, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vb2 = _mm256_set1_pd(b2);
  long p = 0;
  for (; p + 4 <= count; p += 4) {
    __m256d o = zero;
    for (int k = 0; k < n1; ++k) {
      __m256d acc = _mm256_set1_pd(b1[k]);
      for (int j = 0; j < n0; ++j) {
        const __m256d x = _mm256_loadu_pd(pts + j * stride + p);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(W1[k * n0 + j]), x));
      }
      acc = _mm256_max_pd(acc, zero);
      o = _mm256_add_pd(o, _mm256_mul_pd(_mm256_set1_pd(w2[k]), acc));
    }
    _mm256_storeu_pd(out + p, _mm256_add_pd(o, vb2));
  }
  for (; p < count; ++p) out[p] = relu_point(W1, b1, w2, b2, n0, n1, pts, stride, p);
}

FLATPI_AVX2 void max_row_residual(const double* H, const double* h, int m, int d, const double* pts,
                                  long count, long stride, double* out) {
  long p = 0;
  for (; p + 4 <= count; p += 4) {
    __m256d best = _mm256_set1_pd(-__builtin_inf());
    for (int i = 0; i < m; ++i) {
      __m256d s = _mm256_setzero_pd();
      for (int j = 0; j < d; ++j)
        s = _mm256_add_pd(s, _mm256_mul_pd(_mm256_set1_pd(H[i * d + j]), _mm256_loadu_pd(pts + j * stride + p)));
      s = _mm256_sub_pd(s, _mm256_set1_pd(h[i]));
      best = _mm256_max_pd(best, s);
    }
    _mm256_storeu_pd(out + p, best);
  }
  for (; p < count; ++p) out[p] = residual_point(H, h, m, d, pts, stride, p);
}

FLATPI_AVX2 void quad_form(const double* P, int d, const double* pts, long count, long stride, double* out) {
  long p = 0;
  for (; p + 4 <= count; p += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (int i = 0; i < d; ++i) {
      __m256d row = _mm256_setzero_pd();
      for (int j = 0; j < d; ++j)
        row = _mm256_add_pd(row, _mm256_mul_pd(_mm256_set1_pd(P[i * d + j]), _mm256_loadu_pd(pts + j * stride + p)));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(pts + i * stride + p), row));
    }
    _mm256_storeu_pd(out + p, acc);
  }
  for (; p < count; ++p) out[p] = quad_point(P, d, pts, stride, p);
}

}  // namespace

const Kernels avx2_kernels{relu_forward, max_row_residual, quad_form};

}  // namespace flatpi::simd::detail

#endif
