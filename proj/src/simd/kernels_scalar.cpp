#include "kernels_impl.hpp"

namespace flatpi::simd::detail {
namespace {

void relu_forward(const double* W1, const double* b1, const double* w2, double b2, int n0, int n1,
                  const double* pts, long count, long stride, double* out) {
  for (long p = 0; p < count; ++p) out[p] = relu_point(W1, b1, w2, b2, n0, n1, pts, stride, p);
}

void max_row_residual(const double* H, const double* h, int m, int d, const double* pts, long count,
                      long stride, double* out) {
  for (long p = 0; p < count; ++p) out[p] = residual_point(H, h, m, d, pts, stride, p);
}

void quad_form(const double* P, int d, const double* pts, long count, long stride, double* out) {
  for (long p = 0; p < count; ++p) out[p] = quad_point(P, d, pts, stride, p);
}

}  // namespace

const Kernels scalar_kernels{relu_forward, max_row_residual, quad_form};

}  // namespace flatpi::simd::detail
