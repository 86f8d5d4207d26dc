#include "common.hpp"
#include "flatpi/error.hpp"
#include "flatpi/rng.hpp"
#include "flatpi/sim.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace flatpi;
using namespace flatpi::sim;
using flatpi::testing::quad_case;

namespace {

// x' = u - x
models::AffineModel decay() {
  models::Box ws{VectorXd::Constant(2, -10.0), VectorXd::Constant(2, 10.0)};
  return models::AffineModel(VectorXd::Ones(1), 1.0, 1.0, ws);
}

Controller constant(double u) {
  return [u](double, const VectorXd&) {
    Action a;
    a.u = u;
    return a;
  };
}

Controller nominal(const models::FlatModel& m, const invariance::GainCert& g) {
  return [&m, g](double, const VectorXd& x) {
    const VectorXd z = m.to_flat(x);
    Action a;
    a.v = g.K.dot(z);
    a.u = m.flat_input(z, a.v);
    a.V = z.dot(g.P * z);
    return a;
  };
}

VectorXd boundary_point(const MatrixXd& P, double level, Rng& rng) {
  VectorXd d(P.rows());
  for (int i = 0; i < d.size(); ++i) d[i] = rng.normal();
  d.normalize();
  const Eigen::LLT<MatrixXd> llt(P);
  return std::sqrt(level) * VectorXd(llt.matrixU().solve(d));
}

}  // namespace

TEST(Simulate, Rk4MatchesExponential) {
  const auto m = decay();
  const auto tr = simulate(m, constant(0.0), VectorXd::Ones(1), 1.0, 0.01);
  ASSERT_EQ(tr.size(), 101u);
  EXPECT_NEAR(tr.times.back(), 1.0, 1e-12);
  EXPECT_NEAR(tr.states.back()[0], std::exp(-1.0), 1e-8);
}

TEST(Simulate, FourthOrderUnderHeldInput) {
  // The closed loop under a sampled controller changes with dt by itself, so
  // the integrator order is measured with one input held over the whole run.
  const auto& m = *quad_case().model;
  VectorXd x0(3);
  x0 << -2.0, -0.5, 0.085;
  auto end = [&](double dt) { return simulate(m, constant(0.05), x0, 2.0, dt).states.back(); };
  const VectorXd a = end(0.02), b = end(0.01), c = end(0.005);
  const double r = (a - b).norm() / (b - c).norm();
  EXPECT_GT(r, 12.0);
  EXPECT_LT(r, 20.0);
  EXPECT_LT((b - c).norm(), 1e-8);
}

TEST(Simulate, EquilibriumIsConstant) {
  const auto& m = *quad_case().model;
  const auto tr = simulate(m, constant(0.0), VectorXd::Zero(3), 1.0, 1e-3);
  for (const auto& x : tr.states) EXPECT_EQ(x.norm(), 0.0);
  const auto rep = verify_invariance(tr, MatrixXd::Identity(3, 3), 1.0, 0.5, m.u_bound());
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.max_level_ratio, 0.0);
}

TEST(Simulate, ColumnsHaveEqualLengthsAndConstantStep) {
  const auto& c = quad_case();
  VectorXd x0(3);
  x0 << 0.1, 0.0, 0.0;
  const auto tr = simulate(*c.model, nominal(*c.model, c.pi.gain), x0, 0.5, 1e-3);
  const std::size_t n = tr.size();
  EXPECT_EQ(tr.states.size(), n);
  EXPECT_EQ(tr.flat_states.size(), n);
  EXPECT_EQ(tr.inputs.size(), n);
  EXPECT_EQ(tr.virtual_inputs.size(), n);
  EXPECT_EQ(tr.clf_values.size(), n);
  EXPECT_EQ(tr.step_seconds.size(), n);
  EXPECT_FALSE(tr.references);
  for (std::size_t k = 1; k < n; ++k) EXPECT_NEAR(tr.times[k] - tr.times[k - 1], 1e-3, 1e-15);
}

TEST(Simulate, ErrorPaths) {
  const auto& m = *quad_case().model;
  EXPECT_THROW(simulate(m, constant(0.0), VectorXd::Zero(3), 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(simulate(m, constant(0.0), VectorXd::Zero(3), 1e-4, 1e-3), std::invalid_argument);

  const Controller bad = [&m](double t, const VectorXd& x) {
    Action a;
    if (t >= 0.05) {
      VectorXd z = m.to_flat(x);
      z[2] = 100.0;
      a.u = m.flat_input(z, 0.0);
    }
    return a;
  };
  try {
    simulate(m, bad, VectorXd::Zero(3), 1.0, 0.01);
    FAIL() << "expected DomainError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DomainError);
    EXPECT_NE(std::string(e.what()).find("t = 0.05"), std::string::npos) << e.what();
  }

  const Controller nan = [](double, const VectorXd&) {
    Action a;
    a.u = std::nan("");
    return a;
  };
  try {
    simulate(m, nan, VectorXd::Zero(3), 1.0, 0.01);
    FAIL() << "expected NonFinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(Verify, BoundaryStartsUnderNominalLawPass) {
  const auto& c = quad_case();
  Rng rng(3);
  for (int s = 0; s < 5; ++s) {
    const VectorXd z0 = boundary_point(c.pi.gain.P, 0.999 * c.pi.level.eps, rng);
    const auto tr = simulate(*c.model, nominal(*c.model, c.pi.gain), c.model->from_flat(z0), 10.0, 1e-3);
    const auto rep = verify_invariance(tr, c.pi.gain.P, c.pi.level.eps, c.pi.gain.kappa, c.model->u_bound());
    EXPECT_TRUE(rep.ok()) << to_json(rep).dump();
    EXPECT_TRUE(rep.entered);
    EXPECT_EQ(rep.entry_time, 0.0);
    EXPECT_LE(rep.max_level_ratio, 1.0);
    EXPECT_LE(rep.worst_input_ratio, 1.0);
    EXPECT_LT(tr.clf_values.back(), 0.05 * c.pi.level.eps);
  }
}

TEST(Verify, DecreaseHoldsAtTwoStepSizes) {
  const auto& c = quad_case();
  Rng rng(11);
  const VectorXd z0 = boundary_point(c.pi.gain.P, 0.999 * c.pi.level.eps, rng);
  for (double dt : {1e-3, 5e-4}) {
    const auto tr = simulate(*c.model, nominal(*c.model, c.pi.gain), c.model->from_flat(z0), 5.0, dt);
    const auto rep = verify_invariance(tr, c.pi.gain.P, c.pi.level.eps, c.pi.gain.kappa, c.model->u_bound());
    EXPECT_TRUE(rep.decrease_checked);
    EXPECT_TRUE(rep.decrease_ok) << dt << " " << rep.max_decrease << " > " << rep.decrease_tol;
    EXPECT_NEAR(rep.decrease_tol, dt * *std::max_element(tr.clf_values.begin(), tr.clf_values.end()), 1e-15);
  }
}

TEST(Verify, AdversarialInputIsFlagged) {
  const auto& c = quad_case();
  const double ub = c.model->u_bound();
  const auto tr = simulate(*c.model, constant(1.5 * ub), VectorXd::Zero(3), 0.2, 1e-3);
  const auto rep = verify_invariance(tr, c.pi.gain.P, c.pi.level.eps, c.pi.gain.kappa, ub);
  EXPECT_FALSE(rep.constraint_ok);
  EXPECT_FALSE(rep.ok());
  EXPECT_NEAR(rep.worst_input_ratio, 1.5, 1e-12);
  EXPECT_FALSE(rep.notes.empty());
}

TEST(Verify, LeavingTheSetIsFlagged) {
  // synthetic trace: V rises past eps after starting inside
  SimTrace tr;
  for (int k = 0; k < 5; ++k) {
    tr.times.push_back(0.1 * k);
    VectorXd z(1);
    z << 0.5 + 0.2 * k;
    tr.states.push_back(z);
    tr.flat_states.push_back(z);
    tr.inputs.push_back(0.0);
    tr.virtual_inputs.push_back(0.0);
    tr.clf_values.push_back(z[0] * z[0]);
  }
  const auto rep = verify_invariance(tr, MatrixXd::Identity(1, 1), 1.0, 0.1, 1.0);
  EXPECT_TRUE(rep.entered);
  EXPECT_FALSE(rep.invariance_ok);
  EXPECT_NEAR(rep.max_level_ratio, 1.3 * 1.3, 1e-12);
  EXPECT_FALSE(rep.decrease_ok);
  EXPECT_GT(rep.max_decrease, rep.decrease_tol);
}

TEST(Verify, ReferenceShiftsTheLevel) {
  SimTrace tr;
  for (int k = 0; k < 3; ++k) {
    tr.times.push_back(k);
    VectorXd z(1);
    z << 5.0;
    tr.states.push_back(z);
    tr.flat_states.push_back(z);
    tr.inputs.push_back(0.0);
    tr.virtual_inputs.push_back(0.0);
    tr.clf_values.push_back(0.0);
  }
  tr.references = std::vector<double>{4.5, 4.8, 5.0};
  VerifyOptions o;
  o.check_decrease = false;
  const auto rep = verify_invariance(tr, MatrixXd::Identity(1, 1), 0.3, 0.0, 1.0, o);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.entry_time, 0.0);
  EXPECT_NEAR(rep.max_level_ratio, 0.25 / 0.3, 1e-12);
}

TEST(Scenario, NamesRoundTrip) {
  for (auto s : {Scenario::AircraftMultigain, Scenario::QuadCase1, Scenario::QuadCase2})
    EXPECT_EQ(scenario_from_string(to_string(s)), s);
  try {
    scenario_from_string("quad_case3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(Scenario, QuadCase1LawsConvergeAndRepeatBitwise) {
  const auto& c = quad_case();
  ScenarioConfig cfg;
  cfg.controllers = {"clf", "erg"};
  const auto a = run_scenario(Scenario::QuadCase1, *c.model, c.pi.vtilde, cfg);
  const auto b = run_scenario(Scenario::QuadCase1, *c.model, c.pi.vtilde, cfg);
  EXPECT_TRUE(a.ok());
  ASSERT_EQ(a.runs.size(), 2u);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    const auto& r = a.runs[i];
    EXPECT_TRUE(r.ok) << r.name << " " << to_json(r.report).dump();
    EXPECT_LE(r.trace.states.back().norm(), 1e-2) << r.name;
    EXPECT_EQ(format_csv(r.trace), format_csv(b.runs[i].trace)) << r.name;
  }
  EXPECT_EQ(a.certificates.dump(), b.certificates.dump());
}

TEST(Scenario, ErgTracesStayAdmissibleAndMonotone) {
  const auto& c = quad_case();
  ScenarioConfig cfg;
  cfg.controllers = {"erg"};
  const auto res = run_scenario(Scenario::QuadCase2, *c.model, c.pi.vtilde, cfg);
  // the CLF is always checked at x0 in case 2, without simulating it
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_EQ(res.runs[0].name, "clf");
  EXPECT_FALSE(res.runs[0].simulated);
  EXPECT_EQ(res.runs[0].info["status_t0"], "outside_certificate");
  EXPECT_EQ(res.runs[1].name, "erg");
  const auto& tr = res.runs[1].trace;
  ASSERT_TRUE(tr.references);
  const auto& r = *tr.references;
  for (std::size_t k = 0; k < tr.size(); ++k) EXPECT_LE(std::abs(tr.inputs[k]), c.model->u_bound());
  for (std::size_t k = 1; k < r.size(); ++k) {
    EXPECT_GE(r[k], r[k - 1]);  // r_d = 0 lies above r_f(0) = -10
    EXPECT_LE(r[k], 0.0);
  }
  EXPECT_LE(std::abs(tr.states.back()[0]), 0.05);
}

TEST(Scenario, AircraftIsThreadCountIndependent) {
  const auto c = flatpi::testing::load_case("aircraft", 0.1);
  ScenarioConfig cfg;
  cfg.kappas = {0.1};
  cfg.starts = 4;
  cfg.T = 2.0;
  cfg.keep_all_traces = true;
  cfg.jobs = 1;
  const auto a = run_scenario(Scenario::AircraftMultigain, *c.model, c.pi.vtilde, cfg);
  cfg.jobs = 4;
  const auto b = run_scenario(Scenario::AircraftMultigain, *c.model, c.pi.vtilde, cfg);
  ASSERT_EQ(a.runs.size(), 4u);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    EXPECT_TRUE(a.runs[i].ok) << a.runs[i].name;
    EXPECT_EQ(format_csv(a.runs[i].trace), format_csv(b.runs[i].trace));
  }
}

TEST(Export, CsvLayout) {
  const auto m = decay();
  auto tr = simulate(m, constant(0.25), VectorXd::Ones(1), 0.02, 0.01);
  tr.references = std::vector<double>{0.0, 0.5, 1.0};
  const std::string csv = format_csv(tr);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x1,z1,u,v,V,r_f");
  std::getline(in, line);
  EXPECT_EQ(line, "0,1,1,0.25,nan,nan,0");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Export, CsvRoundTripsDoubles) {
  SimTrace tr;
  tr.times = {0.1};
  VectorXd x(1);
  x << 1.0 / 3.0;
  tr.states = {x};
  tr.flat_states = {x};
  tr.inputs = {-2.0 / 7.0};
  tr.virtual_inputs = {1e-300};
  tr.clf_values = {0.0};
  const std::string csv = format_csv(tr);
  const std::string row = csv.substr(csv.find('\n') + 1);
  std::istringstream in(row);
  std::string cell;
  std::vector<double> vals;
  while (std::getline(in, cell, ',')) vals.push_back(cell == "nan\n" || cell == "nan" ? std::nan("") : std::stod(cell));
  ASSERT_EQ(vals.size(), 7u);
  EXPECT_EQ(vals[1], 1.0 / 3.0);
  EXPECT_EQ(vals[3], -2.0 / 7.0);
  EXPECT_EQ(vals[4], 1e-300);
}

TEST(Export, SvgHasThreePanels) {
  const auto m = decay();
  const auto tr = simulate(m, constant(0.25), VectorXd::Ones(1), 1.0, 0.01);
  const std::string svg = format_svg(tr, "decay", 1.0);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  std::size_t count = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
  EXPECT_EQ(count, 3u);
}

TEST(Report, JsonUsesNullForMissingValues) {
  VerificationReport r;
  const auto j = to_json(r);
  EXPECT_TRUE(j["entry_time"].is_null());
  EXPECT_TRUE(j["max_decrease"].is_null());
  EXPECT_TRUE(j["ok"].get<bool>());
}
