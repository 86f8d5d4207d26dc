#pragma once

#include "flatpi/simd.hpp"

namespace flatpi::simd::detail {

extern const Kernels scalar_kernels;
#if defined(__x86_64__) || defined(__i386__)
extern const Kernels avx2_kernels;
#endif
#if defined(__aarch64__)
extern const Kernels neon_kernels;
#endif

// Scalar tails shared by the vector backends (same op order as the lanes).
inline double relu_point(const double* W1, const double* b1, const double* w2, double b2, int n0, int n1,
                         const double* pts, long stride, long p) {
  double out = 0.0;
  for (int k = 0; k < n1; ++k) {
    double acc = b1[k];
    for (int j = 0; j < n0; ++j) acc = acc + W1[k * n0 + j] * pts[j * stride + p];
    acc = acc > 0.0 ? acc : 0.0;
    out = out + w2[k] * acc;
  }
  return out + b2;
}

inline double residual_point(const double* H, const double* h, int m, int d, const double* pts, long stride,
                             long p) {
  double best = -__builtin_inf();
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s = s + H[i * d + j] * pts[j * stride + p];
    s = s - h[i];
    best = best > s ? best : s;
  }
  return best;
}

inline double quad_point(const double* P, int d, const double* pts, long stride, long p) {
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int j = 0; j < d; ++j) row = row + P[i * d + j] * pts[j * stride + p];
    acc = acc + pts[i * stride + p] * row;
  }
  return acc;
}

}  // namespace flatpi::simd::detail
