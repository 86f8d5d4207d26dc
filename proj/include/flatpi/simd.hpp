#pragma once

// Batched point kernels. Points are stored as a row-major dims x count block
// so each coordinate is contiguous across points (one SIMD lane per point).
// Every backend performs the same operations in the same order, so results
// are bitwise identical across backends.

#include <Eigen/Dense>

#include <string_view>

namespace flatpi::simd {

using PointBatch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Backend { Scalar, Avx2, Neon };

struct Kernels {
  // out[p] = sum_k w2[k] * max(b1[k] + sum_j W1[k,j] x[j,p], 0) + b2
  // W1 is row-major n1 x n0.
  void (*relu_forward)(const double* W1, const double* b1, const double* w2, double b2, int n0, int n1,
                       const double* pts, long count, long stride, double* out);
  // out[p] = max_i (sum_j H[i,j] x[j,p] - h[i]); H row-major m x d.
  void (*max_row_residual)(const double* H, const double* h, int m, int d, const double* pts, long count,
                           long stride, double* out);
  // out[p] = sum_i x[i,p] (sum_j P[i,j] x[j,p]); P row-major d x d.
  void (*quad_form)(const double* P, int d, const double* pts, long count, long stride, double* out);
};

bool available(Backend b);
std::string_view name(Backend b);

/// Best backend for this CPU; FLATPI_SIMD=scalar|avx2|neon overrides.
Backend active_backend();
const Kernels& kernels(Backend b);
inline const Kernels& kernels() { return kernels(active_backend()); }

}  // namespace flatpi::simd
