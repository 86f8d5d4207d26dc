#include "flatpi/simd.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>
#include <vector>

using namespace flatpi::simd;

namespace {

std::vector<Backend> vector_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Avx2, Backend::Neon})
    if (available(b)) out.push_back(b);
  return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

PointBatch random_points(std::mt19937_64& rng, int dims, long count) {
  std::normal_distribution<double> g;
  PointBatch pts(dims, count);
  for (long i = 0; i < pts.size(); ++i) pts.data()[i] = 3.0 * g(rng);
  pts(0, 0) = -0.0;
  return pts;
}

}  // namespace

TEST(Simd, ActiveBackendIsAvailable) { EXPECT_TRUE(available(active_backend())); }

TEST(Simd, ReluForwardMatchesScalarBitwise) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int n0 : {1, 3, 4}) {
    const int n1 = 7;
    std::vector<double> W1(n1 * n0), b1(n1), w2(n1);
    for (auto& w : W1) w = g(rng);
    for (auto& w : b1) w = g(rng);
    for (auto& w : w2) w = g(rng);
    b1[0] = 0.0;
    for (long count : {1L, 3L, 4L, 17L, 1001L}) {
      const PointBatch pts = random_points(rng, n0, count);
      std::vector<double> ref(count), out(count);
      kernels(Backend::Scalar).relu_forward(W1.data(), b1.data(), w2.data(), 0.25, n0, n1, pts.data(), count,
                                            count, ref.data());
      for (Backend b : vector_backends()) {
        kernels(b).relu_forward(W1.data(), b1.data(), w2.data(), 0.25, n0, n1, pts.data(), count, count,
                                out.data());
        EXPECT_TRUE(bitwise_equal(ref, out)) << name(b) << " n0=" << n0 << " count=" << count;
      }
    }
  }
}

TEST(Simd, MaxRowResidualMatchesScalarBitwise) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int d : {2, 3, 4}) {
    const int m = 9;
    std::vector<double> H(m * d), h(m);
    for (auto& w : H) w = g(rng);
    for (auto& w : h) w = g(rng);
    for (long count : {2L, 5L, 64L, 333L}) {
      const PointBatch pts = random_points(rng, d, count);
      std::vector<double> ref(count), out(count);
      kernels(Backend::Scalar).max_row_residual(H.data(), h.data(), m, d, pts.data(), count, count, ref.data());
      for (Backend b : vector_backends()) {
        kernels(b).max_row_residual(H.data(), h.data(), m, d, pts.data(), count, count, out.data());
        EXPECT_TRUE(bitwise_equal(ref, out)) << name(b);
      }
    }
  }
}

TEST(Simd, QuadFormMatchesScalarBitwise) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int d : {1, 2, 3, 5}) {
    std::vector<double> P(d * d);
    for (auto& w : P) w = g(rng);
    for (long count : {1L, 4L, 15L, 1024L}) {
      const PointBatch pts = random_points(rng, d, count);
      std::vector<double> ref(count), out(count);
      kernels(Backend::Scalar).quad_form(P.data(), d, pts.data(), count, count, ref.data());
      for (Backend b : vector_backends()) {
        kernels(b).quad_form(P.data(), d, pts.data(), count, count, out.data());
        EXPECT_TRUE(bitwise_equal(ref, out)) << name(b);
      }
    }
  }
}

TEST(Simd, ScalarKernelsAgreeWithEigen) {
  std::mt19937_64 rng(4);
  const int d = 3;
  const PointBatch pts = random_points(rng, d, 50);
  Eigen::Matrix3d P = Eigen::Matrix3d::Random();
  Eigen::Matrix<double, 3, 3, Eigen::RowMajor> Pr = P;
  std::vector<double> out(50);
  kernels(Backend::Scalar).quad_form(Pr.data(), d, pts.data(), 50, 50, out.data());
  for (int p = 0; p < 50; ++p) {
    const Eigen::Vector3d x = pts.col(p);
    EXPECT_NEAR(out[p], x.dot(P * x), 1e-12 * (1.0 + std::abs(out[p])));
  }
}
