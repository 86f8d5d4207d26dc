#include "flatpi/error.hpp"
#include "flatpi/relu.hpp"
#include "flatpi/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace flatpi;
using namespace flatpi::relu;

namespace {

std::string fixture(const std::string& name) { return std::string(FLATPI_FIXTURE_DIR) + "/" + name; }

ReluNet random_net(Rng& rng, int n0, int n1) {
  ReluNet net;
  net.W1.resize(n1, n0);
  net.b1.resize(n1);
  net.W2.resize(n1);
  for (int k = 0; k < n1; ++k) {
    for (int j = 0; j < n0; ++j) net.W1(k, j) = rng.normal();
    net.b1[k] = rng.normal();
    net.W2[k] = rng.normal();
  }
  net.b2 = rng.normal();
  return net;
}

// u = z1 + 2 v represented exactly as relu(a) - relu(-a).
ReluNet exact_affine_net() {
  ReluNet net;
  net.W1.resize(2, 3);
  net.W1 << 1, 0, 2, -1, 0, -2;
  net.b1 = Eigen::Vector2d(0, 0);
  net.W2 = Eigen::Vector2d(1, -1);
  net.b2 = 0.0;
  return net;
}

models::AffineModel affine_model() {
  models::Box w{Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1)};
  return models::AffineModel(Eigen::Vector2d(1.0, 0.0), 2.0, 10.0, w);
}

}  // namespace

TEST(Relu, DeadOutputLayer) {
  Rng rng(1);
  ReluNet net = random_net(rng, 3, 4);
  net.W2.setZero();
  net.b2 = 0.75;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(eval_net(net, Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal())), 0.75);
}

TEST(Relu, InactiveNeuron) {
  ReluNet net{MatrixXd::Ones(1, 1), VectorXd::Zero(1), VectorXd::Ones(1), 0.0};
  EXPECT_EQ(eval_net(net, VectorXd::Constant(1, -1.0)), 0.0);
}

TEST(Relu, MatchesManualEnumeration) {
  Rng rng(2);
  const ReluNet net = random_net(rng, 3, 5);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
    double manual = net.b2;
    for (int k = 0; k < 5; ++k) {
      const double pre = net.W1.row(k).dot(z) + net.b1[k];
      if (pre > 0) manual += net.W2[k] * pre;
    }
    EXPECT_NEAR(eval_net(net, z), manual, 1e-12);
  }
}

TEST(Relu, BatchMatchesScalarBitwise) {
  Rng rng(3);
  const ReluNet net = random_net(rng, 4, 5);
  simd::PointBatch pts(4, 37);
  for (long i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal();
  for (simd::Backend b : {simd::Backend::Scalar, simd::Backend::Avx2, simd::Backend::Neon}) {
    if (!simd::available(b)) continue;
    const VectorXd out = eval_net_batch(net, pts, b);
    for (int p = 0; p < 37; ++p) EXPECT_EQ(out[p], eval_net(net, pts.col(p))) << simd::name(b);
  }
}

TEST(Relu, PiecewiseAffineAlongSegments) {
  Rng rng(4);
  const ReluNet net = random_net(rng, 3, 5);
  for (int t = 0; t < 20; ++t) {
    const Eigen::Vector3d a(rng.normal(), rng.normal(), rng.normal()), b(rng.normal(), rng.normal(), rng.normal());
    const int N = 2000;
    int kinks = 0;
    std::vector<double> f(N + 1);
    for (int i = 0; i <= N; ++i) f[i] = eval_net(net, a + (b - a) * (static_cast<double>(i) / N));
    for (int i = 1; i < N; ++i)
      if (std::abs(f[i + 1] - 2 * f[i] + f[i - 1]) > 1e-9) ++kinks;
    // each breakpoint touches at most two consecutive stencils
    EXPECT_LE(kinks, 2 * net.n1());
  }
}

TEST(Relu, ActivationPatternTieGoesActive) {
  ReluNet net{MatrixXd::Ones(1, 1), VectorXd::Zero(1), VectorXd::Ones(1), 0.0};
  EXPECT_EQ(activation_pattern(net, VectorXd::Zero(1))[0], 1);
  EXPECT_EQ(activation_pattern(net, VectorXd::Constant(1, -1e-300))[0], -1);
}

TEST(Relu, TrainsAffineTargetToResidualTolerance) {
  const auto m = affine_model();
  TrainOptions o;
  o.n1 = 2;
  o.grid = 11;
  o.epochs = 4000;
  TrainReport rep;
  const ReluNet net = train_net(m, o, &rep);
  EXPECT_LE(rep.mse, 1e-6);
  // oracle: recompute the grid residual directly
  double mse = 0.0;
  int count = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      const Eigen::Vector3d zeta(-1 + 0.2 * i, 0.0, -1 + 0.2 * j);
      const double r = eval_net(net, zeta) - (zeta[0] + 2 * zeta[2]);
      mse += r * r;
      ++count;
    }
  EXPECT_LE(mse / count, 1e-6);
  EXPECT_EQ(net.W1.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Relu, TrainingIsBitReproducible) {
  const auto m = models::make_model("aircraft");
  TrainOptions o;
  o.epochs = 300;
  o.seed = 7;
  const ReluNet a = train_net(*m, o), b = train_net(*m, o);
  EXPECT_EQ(format_net(a, std::nullopt), format_net(b, std::nullopt));
  o.seed = 8;
  EXPECT_NE(format_net(a, std::nullopt), format_net(train_net(*m, o), std::nullopt));
}

TEST(Relu, DivergentTrainingThrowsNonFinite) {
  const auto m = models::make_model("aircraft");
  TrainOptions o;
  o.epochs = 2000;
  o.learning_rate = 1e3;
  try {
    train_net(*m, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(Relu, ExactCopyHasZeroError) {
  const auto m = affine_model();
  const ApproxCert c = estimate_error_bound(exact_affine_net(), m, 21, 1.0);
  EXPECT_EQ(c.eps, 0.0);
}

TEST(Relu, MarginFactorScalesExactly) {
  const auto m = models::make_model("quad1d");
  const NetFile f = load_net(fixture("quad1d_net.txt"));
  const ApproxCert a = estimate_error_bound(f.net, *m, 21, 1.0);
  const ApproxCert b = estimate_error_bound(f.net, *m, 21, 1.1);
  EXPECT_EQ(a.max_deviation, b.max_deviation);
  EXPECT_EQ(b.eps, 1.1 * a.eps);
}

TEST(Relu, GridRefinementBoundedByLipschitz) {
  const auto m = models::make_model("quad1d");
  const NetFile f = load_net(fixture("quad1d_net.txt"));
  // net Lipschitz bound (2-norm)
  double Lnet = 0.0;
  for (int k = 0; k < f.net.n1(); ++k) Lnet += std::abs(f.net.W2[k]) * f.net.W1.row(k).norm();
  // map Lipschitz estimate from sampled central differences, doubled
  Rng rng(5);
  const auto& w = m->workspace();
  double Lmap = 0.0;
  for (int t = 0; t < 2000; ++t) {
    VectorXd zeta(4);
    for (int i = 0; i < 4; ++i) zeta[i] = rng.uniform(w.lo[i], w.hi[i]);
    VectorXd grad(4);
    for (int i = 0; i < 4; ++i) {
      VectorXd p = zeta, q = zeta;
      p[i] += 1e-6;
      q[i] -= 1e-6;
      grad[i] = (m->flat_input(p.head(3), p[3]) - m->flat_input(q.head(3), q[3])) / 2e-6;
    }
    Lmap = std::max(Lmap, grad.norm());
  }
  Lmap *= 2.0;
  for (int g : {6, 11, 21}) {
    const ApproxCert coarse = estimate_error_bound(f.net, *m, g, 1.0);
    const ApproxCert fine = estimate_error_bound(f.net, *m, 2 * g - 1, 1.0);
    const double h = ((w.hi - w.lo) / (g - 1)).tail(3).norm();
    EXPECT_GE(fine.max_deviation, coarse.max_deviation);
    EXPECT_LE(fine.max_deviation - coarse.max_deviation, (Lnet + Lmap) * h);
  }
}

TEST(Relu, EpsilonTooLargeForZeroNet) {
  const auto m = models::make_model("aircraft");
  ReluNet net{MatrixXd::Zero(1, 3), VectorXd::Zero(1), VectorXd::Zero(1), 0.0};
  try {
    estimate_error_bound(net, *m, 21);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EpsilonTooLarge);
  }
}

TEST(Relu, SaveLoadRoundTripIsBitwise) {
  Rng rng(6);
  const ReluNet net = random_net(rng, 4, 6);
  ApproxCert c;
  c.eps = 0.1 / 3.0;
  c.max_deviation = c.eps / 1.2;
  c.grid_points_per_dim = 17;
  c.margin_factor = 1.2;
  c.workspace = models::default_workspace("quad1d");
  const std::string path = ::testing::TempDir() + "/roundtrip_net.txt";
  save_net(path, net, c);
  const NetFile f = load_net(path, 4);
  EXPECT_TRUE(f.net.W1 == net.W1);
  EXPECT_TRUE(f.net.b1 == net.b1);
  EXPECT_TRUE(f.net.W2 == net.W2);
  EXPECT_EQ(f.net.b2, net.b2);
  ASSERT_TRUE(f.cert);
  EXPECT_EQ(f.cert->eps, c.eps);
  EXPECT_EQ(format_net(f.net, f.cert), format_net(net, c));
}

TEST(Relu, LoadRejectsSchemaMismatch) {
  const std::string good = format_net(exact_affine_net(), std::nullopt);
  auto code_of = [](const std::string& text, std::optional<int> n0) {
    try {
      parse_net(text, n0);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ConfigError;
  };
  EXPECT_EQ(code_of(good, 4), ErrorCode::FormatError);
  EXPECT_NO_THROW(parse_net(good, 3));
  std::string bad_version = good;
  bad_version.replace(bad_version.find("version 1"), 9, "version 2");
  EXPECT_EQ(code_of(bad_version, std::nullopt), ErrorCode::FormatError);
  EXPECT_EQ(code_of(good.substr(0, good.size() / 2), std::nullopt), ErrorCode::FormatError);
  EXPECT_EQ(code_of(good + "extra\n", std::nullopt), ErrorCode::FormatError);
  EXPECT_EQ(code_of("garbage", std::nullopt), ErrorCode::FormatError);
}

TEST(Relu, FixtureRegressionOutputs) {
  for (const std::string name : {"aircraft", "quad1d"}) {
    const NetFile f = load_net(fixture(name + "_net.txt"));
    std::ifstream in(fixture(name + "_net_outputs.txt"));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      std::istringstream is(line);
      VectorXd zeta(f.net.n0());
      for (int i = 0; i < f.net.n0(); ++i) is >> zeta[i];
      double expect;
      is >> expect;
      EXPECT_NEAR(eval_net(f.net, zeta), expect, 1e-12 * std::max(1.0, std::abs(expect)));
      ++rows;
    }
    EXPECT_EQ(rows, 64);
  }
}

// Triangle inequality: |net| <= u_bar - eps implies |flat_input| <= u_bar.
TEST(Relu, TighteningIsSoundOnSamples) {
  for (const std::string name : {"aircraft", "quad1d"}) {
    const auto m = models::make_model(name);
    const NetFile f = load_net(fixture(name + "_net.txt"));
    ASSERT_TRUE(f.cert);
    const int n = m->n();
    const auto& w = m->workspace();
    Rng rng(7);
    int inside = 0, violations = 0;
    for (int t = 0; t < 100000; ++t) {
      VectorXd zeta(n + 1);
      for (int i = 0; i <= n; ++i) zeta[i] = rng.uniform(w.lo[i], w.hi[i]);
      if (std::abs(eval_net(f.net, zeta)) > m->u_bound() - f.cert->eps) continue;
      ++inside;
      if (std::abs(m->flat_input(zeta.head(n), zeta[n])) > m->u_bound()) ++violations;
    }
    EXPECT_GT(inside, 1000) << name;
    EXPECT_EQ(violations, 0) << name;
  }
}
