#include "common.hpp"
#include "flatpi/controllers.hpp"
#include "flatpi/error.hpp"
#include "flatpi/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace flatpi;
using namespace flatpi::controllers;
using flatpi::testing::quad_case;

namespace {

VectorXd sample_in_ellipsoid(const Ellipsoid& e, Rng& rng, double shrink = 1.0) {
  const int n = static_cast<int>(e.P.rows());
  VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = rng.normal();
  u.normalize();
  const double r = std::pow(rng.uniform(), 1.0 / n);
  const Eigen::LLT<MatrixXd> llt(e.P);
  return std::sqrt(shrink * e.eps_level) * r * VectorXd(llt.matrixU().solve(u));
}

ClfConfig quad_clf() {
  const auto& c = quad_case();
  ClfConfig cfg;
  cfg.gain = c.pi.gain;
  cfg.ellipsoid = c.pi.ellipsoid();
  cfg.u_bar = c.model->u_bound();
  cfg.u_desired = linear_flat_input(*c.model, RowVectorXd{{-3.2, -5.5, -4.0}});
  return cfg;
}

MpcConfig quad_mpc() {
  const auto& c = quad_case();
  MpcConfig cfg;
  cfg.terminal = flatpi::testing::quad_terminal(c);
  cfg.vtilde = c.pi.vtilde;
  return cfg;
}

}  // namespace

TEST(Controllers, NominalAtEquilibriumIsZero) {
  const auto& c = quad_case();
  for (double r : {0.0, 1.5, -3.0}) {
    const VectorXd xe = c.model->from_flat(c.model->flat_equilibrium(r));
    EXPECT_NEAR(nominal_control(*c.model, c.pi.gain, xe, r), 0.0, 1e-14);
  }
}

TEST(Controllers, AircraftNominalAtOriginIsTrim) {
  models::AircraftModel a;
  invariance::GainCert g = invariance::synth_gain(a.A(), a.B(), 0.1);
  const double u = nominal_control(a, g, VectorXd::Zero(2));
  EXPECT_NEAR(u, 4.0 * 2.5e5 / 42.0, 1e-9 * u);
}

TEST(Controllers, NominalIsAdmissibleInsideCertificate) {
  const auto& c = quad_case();
  const Ellipsoid e = c.pi.ellipsoid();
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const VectorXd z = sample_in_ellipsoid(e, rng);
    const VectorXd x = c.model->from_flat(z);
    EXPECT_LE(std::abs(nominal_control(*c.model, c.pi.gain, x)), c.model->u_bound());
  }
}

TEST(Controllers, ClfGradientMatchesFiniteDifferences) {
  const auto& c = quad_case();
  const MatrixXd& P = c.pi.gain.P;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    VectorXd x(3);
    x << rng.uniform(-5, 5), rng.uniform(-1.5, 1.5), rng.uniform(-0.25, 0.25);
    const double r = rng.uniform(-2, 2);
    const ClfValue v = clf_value_grad(*c.model, P, x, r);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
      VectorXd xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      const double fd = (clf_value_grad(*c.model, P, xp, r).V - clf_value_grad(*c.model, P, xm, r).V) / (2 * h);
      EXPECT_NEAR(v.grad[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
  const VectorXd xe = c.model->from_flat(c.model->flat_equilibrium(0.7));
  const ClfValue at = clf_value_grad(*c.model, P, xe, 0.7);
  EXPECT_NEAR(at.V, 0.0, 1e-24);
  EXPECT_LE(at.grad.norm(), 1e-12);
}

TEST(Controllers, AircraftClfGradientIsLinear) {
  models::AircraftModel a;
  MatrixXd P(2, 2);
  P << 2.0, 0.3, 0.3, 1.0;
  const VectorXd x = Eigen::Vector2d(0.1, -0.4);
  const ClfValue v = clf_value_grad(a, P, x);
  EXPECT_NEAR(v.V, x.dot(P * x), 1e-15);
  EXPECT_LE((v.grad - 2.0 * P * x).norm(), 1e-14);
}

TEST(Controllers, ProjectionExamples) {
  // constraint inactive
  EXPECT_DOUBLE_EQ(*clf_project(0.3, 1.0, 5.0, 1.0), 0.3);
  // vacuous decrease row
  EXPECT_DOUBLE_EQ(*clf_project(2.0, 0.0, 1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(*clf_project(-0.4, 0.0, 0.0, 1.0), -0.4);
  // active decrease row: b/a = 0.25 < u_d = 0.5 < u_bar
  EXPECT_DOUBLE_EQ(*clf_project(0.5, 2.0, 0.5, 1.0), 0.25);
  EXPECT_NEAR(clf_filter_qp(0.5, 2.0, 0.5, 1.0), 0.25, 1e-9);
  // empty
  EXPECT_FALSE(clf_project(0.0, 0.0, -1.0, 1.0));
  EXPECT_FALSE(clf_project(0.0, 1.0, -2.0, 1.0));
  EXPECT_FALSE(clf_project(0.0, -1.0, -2.0, 1.0));
}

TEST(Controllers, ProjectionMatchesQpOnRandomPrograms) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(-1, 3), ud = rng.uniform(-4, 4), ub = rng.uniform(0.1, 2);
    const auto u = clf_project(ud, a, b, ub);
    if (!u) continue;
    EXPECT_NEAR(*u, clf_filter_qp(ud, a, b, ub), 1e-9);
  }
}

TEST(Controllers, ProjectionIgnoresHowFarOutsideUdIs) {
  Rng rng(6);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-3, 3), b = rng.uniform(0, 3), ub = 1.0;
    const auto hi = clf_project(ub + 1e6, a, b, ub);
    const auto lo = clf_project(-ub - 1e6, a, b, ub);
    ASSERT_TRUE(hi && lo);
    for (double s : {1.01, 3.0, 100.0}) {
      EXPECT_EQ(*clf_project(s * (ub + 1e6), a, b, ub), *hi);
      EXPECT_EQ(*clf_project(s * (-ub - 1e6), a, b, ub), *lo);
    }
  }
}

TEST(Controllers, FilterInsideCertificateMatchesQpAndNeverFails) {
  const auto& c = quad_case();
  const ClfConfig cfg = quad_clf();
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const VectorXd x = c.model->from_flat(sample_in_ellipsoid(cfg.ellipsoid, rng));
    FilterResult r;
    ASSERT_NO_THROW(r = clf_filter(cfg, *c.model, x));
    EXPECT_EQ(r.status, FilterStatus::Ok);
    EXPECT_LE(std::abs(r.u), cfg.u_bar);
    EXPECT_LE(r.a * r.u, r.b + 1e-12 * std::max(1.0, std::abs(r.b)));
    EXPECT_NEAR(r.u, clf_filter_qp(cfg.u_desired(x), r.a, r.b, cfg.u_bar), 1e-9);
  }
}

TEST(Controllers, FilterOutsideCertificate) {
  const auto& c = quad_case();
  ClfConfig cfg = quad_clf();
  const VectorXd x = Eigen::Vector3d(-10.0, -0.15, 0.0);
  bool threw = false;
  try {
    const FilterResult r = clf_filter(cfg, *c.model, x);
    EXPECT_EQ(r.status, FilterStatus::OutsideCertificate);
  } catch (const Error& e) {
    threw = true;
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleFilter);
  }
  cfg.relax_infeasible = true;
  const FilterResult r = clf_filter(cfg, *c.model, x);
  EXPECT_NE(r.status, FilterStatus::Ok);
  EXPECT_GT(r.V, cfg.ellipsoid.eps_level);
  if (threw) {
    EXPECT_EQ(r.status, FilterStatus::Relaxed);
  }
}

TEST(Controllers, ErgExamples) {
  const auto& c = quad_case();
  ErgConfig cfg;
  cfg.ellipsoid = c.pi.ellipsoid();
  cfg.gain = c.pi.gain;
  cfg.r_desired = 1.0;
  const double eps = cfg.ellipsoid.eps_level;

  // converged reference
  VectorXd x = c.model->from_flat(c.model->flat_equilibrium(1.0));
  EXPECT_EQ(erg_step(cfg, *c.model, x, 1.0, 0.01), 1.0);

  // state with V(x, r_f) = eps - 0.1 relative to r_f = 0: pick z along the first axis
  const double target = eps - 0.1;
  ASSERT_GT(target, 0.0);
  VectorXd z = VectorXd::Zero(3);
  z[0] = std::sqrt(target / cfg.gain.P(0, 0));
  x = c.model->from_flat(z);
  const ErgTerms t = erg_terms(cfg, *c.model, x, 0.0);
  EXPECT_NEAR(t.Vbar, target, 1e-12);
  EXPECT_NEAR(t.rho, 1.0, 0.0);
  EXPECT_NEAR(t.delta, 20.0 * 0.1, 1e-10);
  EXPECT_NEAR(erg_step(cfg, *c.model, x, 0.0, 0.01), 0.02, 1e-12);

  // zero margin
  z[0] = std::sqrt(eps / cfg.gain.P(0, 0));
  EXPECT_NEAR(erg_step(cfg, *c.model, c.model->from_flat(z), 0.0, 0.01), 0.0, 1e-12);

  // small gap uses eta
  cfg.r_desired = 0.1;
  EXPECT_NEAR(erg_terms(cfg, *c.model, VectorXd::Zero(3), 0.0).rho, 0.5, 1e-15);

  // outside: clamp vs signed margin
  z[0] = 2.0 * std::sqrt(eps / cfg.gain.P(0, 0));
  x = c.model->from_flat(z);
  EXPECT_EQ(erg_terms(cfg, *c.model, x, 0.0).delta, 0.0);
  cfg.allow_negative_margin = true;
  EXPECT_LT(erg_terms(cfg, *c.model, x, 0.0).delta, 0.0);

  EXPECT_THROW(erg_step(cfg, *c.model, x, 0.0, 0.0), std::invalid_argument);
}

TEST(Controllers, ZohOfTripleIntegrator) {
  const auto& c = quad_case();
  for (double h : {0.1, 0.37, 2.0}) {
    MatrixXd Ad;
    VectorXd Bd;
    zoh(c.model->A(), c.model->B(), h, Ad, Bd);
    MatrixXd Aref(3, 3);
    Aref << 1, h, h * h / 2, 0, 1, h, 0, 0, 1;
    const Eigen::Vector3d Bref(h * h * h / 6, h * h / 2, h);
    EXPECT_LE((Ad - Aref).cwiseAbs().maxCoeff(), 1e-15 * std::max(1.0, h * h));
    EXPECT_LE((Bd - Bref).cwiseAbs().maxCoeff(), 1e-15 * std::max(1.0, h * h * h));
  }
  EXPECT_THROW(
      {
        MatrixXd Ad;
        VectorXd Bd;
        zoh(MatrixXd::Identity(2, 2), VectorXd::Ones(2), 0.1, Ad, Bd);
      },
      std::invalid_argument);
}

TEST(Controllers, MpcAtOriginIsIdle) {
  const auto& c = quad_case();
  const MpcConfig cfg = quad_mpc();
  const MpcSolution s = fmpc_solve(cfg, *c.model, VectorXd::Zero(3));
  EXPECT_TRUE(s.feasible);
  EXPECT_LE(s.v.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(s.cost, 1e-20);
}

TEST(Controllers, MpcCostBoundedByTerminalFunction) {
  const auto& c = quad_case();
  const MpcConfig cfg = quad_mpc();
  const Ellipsoid term{cfg.terminal.Pstar, cfg.terminal.eps_star};
  Rng rng(21);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 15; ++i) {
    const VectorXd z0 = sample_in_ellipsoid(term, rng, 0.5);
    // nominal rollout must stay in a single cell
    MatrixXd Ad;
    VectorXd Bd;
    zoh(c.model->A(), c.model->B(), cfg.dt(), Ad, Bd);
    VectorXd z = z0;
    int cell = -1;
    bool single = true;
    for (int k = 0; k < cfg.steps && single; ++k) {
      VectorXd zeta(4);
      zeta << z, cfg.terminal.Kstar.dot(z);
      int here = -1;
      for (std::size_t j = 0; j < cfg.vtilde.cells.size(); ++j)
        if (geometry::interior_margin(cfg.vtilde.cells[j], zeta) > 1e-6) here = static_cast<int>(j);
      if (here < 0 || (cell >= 0 && here != cell)) single = false;
      cell = here;
      z = (Ad + Bd * cfg.terminal.Kstar) * z;
    }
    if (!single) continue;
    ++checked;
    const MpcSolution s = fmpc_solve(cfg, *c.model, z0);
    EXPECT_TRUE(mpc_feasible(cfg, *c.model, z0, s.v));
    EXPECT_LE(s.cost, z0.dot(cfg.terminal.Pstar * z0) * (1 + 1e-9));
    EXPECT_NEAR(s.cost, mpc_cost(cfg, *c.model, z0, s.v), 1e-9 * std::max(1.0, s.cost));
  }
  EXPECT_GE(checked, 5);
}

TEST(Controllers, MpcSolutionRespectsConstraints) {
  const auto& c = quad_case();
  const MpcConfig cfg = quad_mpc();
  const VectorXd z0 = c.model->to_flat(Eigen::Vector3d(-2.0, -0.5, 0.085));
  const MpcSolution s = fmpc_solve(cfg, *c.model, z0);
  ASSERT_TRUE(s.feasible);
  EXPECT_TRUE(mpc_feasible(cfg, *c.model, z0, s.v));
  const VectorXd zN = s.z.row(cfg.steps).transpose();
  EXPECT_LE(zN.dot(cfg.terminal.Pstar * zN), cfg.terminal.eps_star);
  for (int k = 0; k < cfg.steps; ++k) {
    const VectorXd z = s.z.row(k).transpose();
    EXPECT_LE(std::abs(c.model->flat_input(z, s.v[k])), c.model->u_bound());
  }
  // a warm start that is already optimal cannot be beaten by more than the gap
  const MpcSolution w = fmpc_solve(cfg, *c.model, z0, s.v);
  EXPECT_NEAR(w.cost, s.cost, 1e-6 * s.cost);
}

TEST(Controllers, MpcErrorPaths) {
  const auto& c = quad_case();
  MpcConfig cfg = quad_mpc();
  const VectorXd far = c.model->to_flat(Eigen::Vector3d(-10.0, -0.15, 0.0));
  try {
    fmpc_solve(cfg, *c.model, far);
    FAIL() << "expected InfeasibleMPC";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfeasibleMPC);
  }
  cfg.node_limit = 0;
  try {
    fmpc_solve(cfg, *c.model, far);
    FAIL() << "expected NodeBudget";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NodeBudget);
  }
  VectorXd bad = VectorXd::Zero(3);
  bad[0] = std::nan("");
  EXPECT_THROW(fmpc_solve(quad_mpc(), *c.model, bad), Error);
}
