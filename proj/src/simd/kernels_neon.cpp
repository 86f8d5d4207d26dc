#if defined(__aarch64__)

#include "kernels_impl.hpp"

#include <arm_neon.h>

namespace flatpi::simd::detail {
namespace {

// vmulq + vaddq kept separate (no vfmaq) to round like the scalar path.

void relu_forward(const double* W1, const double* b1, const double* w2, double b2, int n0, int n1,
                  const double* pts, long count, long stride, double* out) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  long p = 0;
  for (; p + 2 <= count; p += 2) {
    float64x2_t o = zero;
    for (int k = 0; k < n1; ++k) {
      float64x2_t acc = vdupq_n_f64(b1[k]);
      for (int j = 0; j < n0; ++j)
        acc = vaddq_f64(acc, vmulq_f64(vdupq_n_f64(W1[k * n0 + j]), vld1q_f64(pts + j * stride + p)));
      // acc > 0 ? acc : 0
      acc = vbslq_f64(vcgtq_f64(acc, zero), acc, zero);
      o = vaddq_f64(o, vmulq_f64(vdupq_n_f64(w2[k]), acc));
    }
    vst1q_f64(out + p, vaddq_f64(o, vdupq_n_f64(b2)));
  }
  for (; p < count; ++p) out[p] = relu_point(W1, b1, w2, b2, n0, n1, pts, stride, p);
}

void max_row_residual(const double* H, const double* h, int m, int d, const double* pts, long count,
                      long stride, double* out) {
  long p = 0;
  for (; p + 2 <= count; p += 2) {
    float64x2_t best = vdupq_n_f64(-__builtin_inf());
    for (int i = 0; i < m; ++i) {
      float64x2_t s = vdupq_n_f64(0.0);
      for (int j = 0; j < d; ++j)
        s = vaddq_f64(s, vmulq_f64(vdupq_n_f64(H[i * d + j]), vld1q_f64(pts + j * stride + p)));
      s = vsubq_f64(s, vdupq_n_f64(h[i]));
      best = vbslq_f64(vcgtq_f64(best, s), best, s);
    }
    vst1q_f64(out + p, best);
  }
  for (; p < count; ++p) out[p] = residual_point(H, h, m, d, pts, stride, p);
}

void quad_form(const double* P, int d, const double* pts, long count, long stride, double* out) {
  long p = 0;
  for (; p + 2 <= count; p += 2) {
    float64x2_t acc = vdupq_n_f64(0.0);
    for (int i = 0; i < d; ++i) {
      float64x2_t row = vdupq_n_f64(0.0);
      for (int j = 0; j < d; ++j)
        row = vaddq_f64(row, vmulq_f64(vdupq_n_f64(P[i * d + j]), vld1q_f64(pts + j * stride + p)));
      acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(pts + i * stride + p), row));
    }
    vst1q_f64(out + p, acc);
  }
  for (; p < count; ++p) out[p] = quad_point(P, d, pts, stride, p);
}

}  // namespace

const Kernels neon_kernels{relu_forward, max_row_residual, quad_form};

}  // namespace flatpi::simd::detail

#endif
