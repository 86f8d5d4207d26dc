#include "flatpi/error.hpp"
#include "flatpi/parallel.hpp"
#include "flatpi/rng.hpp"
#include "flatpi/sim.hpp"

#include <cmath>
#include <sstream>

namespace flatpi::sim {
namespace {

using controllers::Ellipsoid;
using invariance::GainCert;

std::vector<double> vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json mat(const MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) j.push_back(vec(m.row(i).transpose()));
  return j;
}

nlohmann::json cert_json(const invariance::PiResult& pi) {
  return {{"kappa", pi.gain.kappa},
          {"K", vec(pi.gain.K.transpose())},
          {"P", mat(pi.gain.P)},
          {"eps", pi.level.eps},
          {"volume", pi.volume},
          {"cells", pi.zk.cells.size()},
          {"facets", pi.facets.size()}};
}

RowVectorXd row(const std::vector<double>& v) {
  return Eigen::Map<const RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double check_bound(const ScenarioConfig& cfg, const models::FlatModel& model) {
  return cfg.verify_u_bar ? *cfg.verify_u_bar : model.u_bound();
}

bool wants(const ScenarioConfig& cfg, const std::string& name) {
  for (const auto& c : cfg.controllers)
    if (c == name) return true;
  return false;
}

Controller nominal_law(const models::FlatModel& model, const GainCert& g) {
  return [&model, g](double, const VectorXd& x) {
    const VectorXd z = model.to_flat(x);
    Action a;
    a.v = g.K.dot(z);
    a.u = model.flat_input(z, a.v);
    a.V = z.dot(g.P * z);
    return a;
  };
}

// point on {z'Pz = level} along a uniformly drawn direction
VectorXd on_level(const MatrixXd& P, double level, Rng& rng) {
  VectorXd d(P.rows());
  for (int i = 0; i < d.size(); ++i) d[i] = rng.normal();
  d.normalize();
  const Eigen::LLT<MatrixXd> llt(P);
  return std::sqrt(level) * VectorXd(llt.matrixU().solve(d));
}

void finish(ControllerRun& run) {
  run.timing = timing_of(run.trace);
  run.ok = run.ok && run.report.ok();
}

ScenarioResult aircraft(const models::FlatModel& model, const geometry::PolyUnion& vtilde, const ScenarioConfig& cfg) {
  ScenarioResult res;
  res.scenario = Scenario::AircraftMultigain;
  res.certificates = nlohmann::json::array();
  const double T = cfg.T > 0.0 ? cfg.T : 10.0;

  std::vector<invariance::PiResult> pis;
  for (double kappa : cfg.kappas) {
    invariance::PiOptions o;
    o.jobs = cfg.jobs;
    pis.push_back(invariance::characterize_pi(model, vtilde, kappa, o));
    res.certificates.push_back(cert_json(pis.back()));
  }

  struct Job {
    int cert, start;
    VectorXd x0;
  };
  std::vector<Job> jobs;
  Rng rng(cfg.seed);
  for (int c = 0; c < static_cast<int>(pis.size()); ++c)
    for (int s = 0; s < cfg.starts; ++s)
      jobs.push_back({c, s, model.from_flat(on_level(pis[c].gain.P, cfg.start_level * pis[c].level.eps, rng))});

  res.runs.resize(jobs.size());
  parallel_for(static_cast<long>(jobs.size()), cfg.jobs, [&](long i) {
    const Job& j = jobs[i];
    const auto& pi = pis[j.cert];
    ControllerRun& run = res.runs[i];
    std::ostringstream name;
    name << "nominal[kappa=" << pi.gain.kappa << ",start=" << j.start << "]";
    run.name = name.str();
    run.trace = simulate(model, nominal_law(model, pi.gain), j.x0, T, cfg.dt);
    run.report = verify_invariance(run.trace, pi.gain.P, pi.level.eps, pi.gain.kappa, check_bound(cfg, model));
    const double vend = run.trace.clf_values.back();
    run.info = {{"kappa", pi.gain.kappa}, {"start", j.start}, {"x0", vec(j.x0)}, {"final_level_ratio", vend / pi.level.eps}};
    finish(run);
    if (!cfg.keep_all_traces && j.start != 0) run.trace = SimTrace{};
  });
  return res;
}

ControllerRun run_clf(const models::FlatModel& model, const invariance::PiResult& pi, const VectorXd& x0,
                      const ScenarioConfig& cfg, double T, bool simulate_it) {
  controllers::ClfConfig c;
  c.gain = pi.gain;
  c.ellipsoid = pi.ellipsoid();
  c.u_bar = model.u_bound();
  c.u_desired = controllers::linear_flat_input(model, row(cfg.k_lqr));
  c.relax_infeasible = true;

  ControllerRun run;
  run.name = "clf";
  const auto first = controllers::clf_filter(c, model, x0);
  auto status = [](controllers::FilterStatus s) {
    switch (s) {
      case controllers::FilterStatus::Ok: return "ok";
      case controllers::FilterStatus::OutsideCertificate: return "outside_certificate";
      case controllers::FilterStatus::Relaxed: return "relaxed";
    }
    return "ok";
  };
  run.info["status_t0"] = status(first.status);
  run.info["V0_over_eps"] = first.V / c.ellipsoid.eps_level;
  if (!simulate_it) {
    run.simulated = false;
    run.ok = true;
    return run;
  }

  long outside = 0, relaxed = 0;
  const Controller law = [&](double, const VectorXd& x) {
    const auto r = controllers::clf_filter(c, model, x);
    if (r.status != controllers::FilterStatus::Ok) ++outside;
    if (r.status == controllers::FilterStatus::Relaxed) ++relaxed;
    Action a;
    a.u = r.u;
    a.V = r.V;
    return a;
  };
  run.trace = simulate(model, law, x0, T, cfg.dt);
  run.report = verify_invariance(run.trace, pi.gain.P, pi.level.eps, pi.gain.kappa, check_bound(cfg, model));
  run.info["steps_outside"] = outside;
  run.info["steps_relaxed"] = relaxed;
  run.info["final_state_norm"] = run.trace.states.back().norm();
  finish(run);
  return run;
}

ControllerRun run_erg(const models::FlatModel& model, const invariance::PiResult& pi, const VectorXd& x0,
                      const ScenarioConfig& cfg, double T) {
  controllers::ErgConfig e;
  e.lambda = cfg.erg_lambda;
  e.eta = cfg.erg_eta;
  e.ellipsoid = pi.ellipsoid();
  e.gain = pi.gain;
  e.r_desired = 0.0;
  e.allow_negative_margin = cfg.allow_negative_margin;

  ControllerRun run;
  run.name = "erg";
  double r_f = model.to_flat(x0)[0];
  const double r0 = r_f;
  bool monotone = true;
  const Controller law = [&](double, const VectorXd& x) {
    const VectorXd z = model.to_flat(x);
    const VectorXd ze = model.flat_equilibrium(r_f);
    Action a;
    a.v = pi.gain.K.dot(z - ze);
    a.u = model.flat_input(z, a.v);
    a.V = (z - ze).dot(pi.gain.P * (z - ze));
    a.r_f = r_f;
    const double next = controllers::erg_step(e, model, x, r_f, cfg.dt);
    // never overshoots r_d and never moves away from it
    if ((next - r_f) * (e.r_desired - r_f) < 0.0 || (next - e.r_desired) * (r_f - e.r_desired) < 0.0) monotone = false;
    r_f = next;
    return a;
  };
  run.trace = simulate(model, law, x0, T, cfg.dt);
  VerifyOptions vo;
  vo.check_decrease = false;
  run.report = verify_invariance(run.trace, pi.gain.P, pi.level.eps, pi.gain.kappa, check_bound(cfg, model), vo);
  run.info["r_f0"] = r0;
  run.info["r_f_final"] = r_f;
  run.info["reference_monotone"] = monotone;
  run.info["final_x1"] = run.trace.states.back()[0];
  run.info["final_state_norm"] = run.trace.states.back().norm();
  run.ok = monotone && run.report.entered && run.report.entry_time == 0.0;
  finish(run);
  return run;
}

ControllerRun run_mpc(const models::FlatModel& model, const geometry::PolyUnion& vtilde, const VectorXd& x0,
                      const ScenarioConfig& cfg, double T, nlohmann::json& certs) {
  const MpcTuning& m = cfg.mpc;
  const int n = model.n();
  if (static_cast<int>(m.kstar.size()) != n) throw Error(ErrorCode::ConfigError, "mpc.kstar has the wrong length");
  controllers::MpcConfig mc;
  mc.terminal = invariance::synth_terminal(model.A(), model.B(), row(m.kstar), m.q * MatrixXd::Identity(n, n), m.r,
                                           m.delta);
  invariance::PiOptions po;
  po.jobs = cfg.jobs;
  invariance::terminal_level(mc.terminal, vtilde, po);
  mc.vtilde = vtilde;
  mc.horizon = m.horizon;
  mc.steps = m.steps;
  mc.node_limit = m.node_limit;
  certs["terminal"] = invariance::to_json(mc.terminal);

  const double h = mc.dt();
  const long period = std::lround(h / cfg.dt);
  if (period < 1 || std::abs(period * cfg.dt - h) > 1e-9 * h)
    throw Error(ErrorCode::ConfigError, "mpc step length must be a multiple of the simulation step");

  // longer horizon at the same step length until the first problem is feasible
  const VectorXd z0 = model.to_flat(x0);
  std::optional<controllers::MpcSolution> first;
  std::vector<int> tried;
  for (;;) {
    tried.push_back(mc.steps);
    try {
      first = controllers::fmpc_solve(mc, model, z0);
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InfeasibleMPC || mc.steps + m.escalate_steps > m.max_steps || m.escalate_steps <= 0)
        throw;
    }
    mc.steps += m.escalate_steps;
    mc.horizon = h * mc.steps;
  }

  ControllerRun run;
  run.name = "mpc";
  const int N = mc.steps;
  const MatrixXd& Ps = mc.terminal.Pstar;
  std::optional<VectorXd> warm;
  double v = 0.0;
  long calls = 0, nodes = 0, max_nodes = 0;
  std::vector<double> costs, cost_times;
  const Controller law = [&](double t, const VectorXd& x) {
    const VectorXd z = model.to_flat(x);
    if (calls++ % period == 0) {
      controllers::MpcSolution s;
      if (first) {
        s = std::move(*first);
        first.reset();
      } else {
        s = controllers::fmpc_solve(mc, model, z, warm);
      }
      nodes += s.nodes;
      max_nodes = std::max(max_nodes, s.nodes);
      costs.push_back(s.cost);
      cost_times.push_back(t);
      v = s.v[0];
      VectorXd w(N);
      w.head(N - 1) = s.v.tail(N - 1);
      w[N - 1] = mc.terminal.Kstar.dot(s.z.row(N).transpose());
      warm = w;
    }
    Action a;
    a.v = v;
    a.u = model.flat_input(z, v);
    a.V = z.dot(Ps * z);
    return a;
  };
  run.trace = simulate(model, law, x0, T, cfg.dt);
  VerifyOptions vo;
  vo.check_decrease = false;
  run.report = verify_invariance(run.trace, Ps, mc.terminal.eps_star, 0.0, check_bound(cfg, model), vo);

  const double slack = 10.0 * h * h;
  double worst_rise = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < costs.size(); ++k) worst_rise = std::max(worst_rise, costs[k] - costs[k - 1]);
  const bool monotone = costs.size() < 2 || worst_rise <= slack;
  run.info = {{"steps", N},
              {"horizon", mc.horizon},
              {"tried_steps", tried},
              {"solves", costs.size()},
              {"nodes", nodes},
              {"max_nodes", max_nodes},
              {"first_cost", costs.front()},
              {"final_cost", costs.back()},
              {"worst_cost_rise", costs.size() < 2 ? 0.0 : worst_rise},
              {"cost_slack", slack},
              {"cost_monotone", monotone},
              {"terminal_entry_time", run.report.entered ? nlohmann::json(run.report.entry_time) : nlohmann::json()},
              {"final_state_norm", run.trace.states.back().norm()}};
  run.ok = monotone && run.report.entered;
  finish(run);
  return run;
}

ScenarioResult quad(Scenario s, const models::FlatModel& model, const geometry::PolyUnion& vtilde,
                    const ScenarioConfig& cfg) {
  ScenarioResult res;
  res.scenario = s;
  const bool case2 = s == Scenario::QuadCase2;
  const double T = cfg.T > 0.0 ? cfg.T : (case2 ? 40.0 : 20.0);
  VectorXd x0(3);
  if (case2) x0 << -10.0, -0.15, 0.0;
  else x0 << -2.0, -0.5, 0.085;

  invariance::PiOptions o;
  o.jobs = cfg.jobs;
  const invariance::PiResult pi = invariance::characterize_pi(model, vtilde, cfg.kappa, o);
  res.certificates = {{"gain", cert_json(pi)}};

  if (wants(cfg, "clf") || case2) {
    ControllerRun run = run_clf(model, pi, x0, cfg, T, !case2 || cfg.force_clf);
    if (case2) {
      // expected: the start lies outside the certified region
      const bool outside = run.info["status_t0"] != "ok";
      run.info["expected_outside_certificate"] = true;
      run.ok = run.ok && outside;
    }
    res.runs.push_back(std::move(run));
  }
  if (wants(cfg, "erg")) res.runs.push_back(run_erg(model, pi, x0, cfg, T));
  if (wants(cfg, "mpc")) res.runs.push_back(run_mpc(model, vtilde, x0, cfg, T, res.certificates));
  return res;
}

}  // namespace

Scenario scenario_from_string(const std::string& s) {
  if (s == "aircraft_multigain") return Scenario::AircraftMultigain;
  if (s == "quad_case1") return Scenario::QuadCase1;
  if (s == "quad_case2") return Scenario::QuadCase2;
  throw Error(ErrorCode::ConfigError, "unknown scenario '" + s + "'");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::AircraftMultigain: return "aircraft_multigain";
    case Scenario::QuadCase1: return "quad_case1";
    case Scenario::QuadCase2: return "quad_case2";
  }
  return "?";
}

bool ScenarioResult::ok() const {
  for (const auto& r : runs)
    if (!r.ok) return false;
  return true;
}

ScenarioResult run_scenario(Scenario s, const models::FlatModel& model, const geometry::PolyUnion& vtilde,
                            const ScenarioConfig& cfg) {
  const bool is_aircraft = s == Scenario::AircraftMultigain;
  if (is_aircraft != (model.name() == "aircraft") || (!is_aircraft && model.name() != "quad1d"))
    throw Error(ErrorCode::ConfigError, "scenario " + to_string(s) + " does not match model " + model.name());
  if (!(cfg.dt > 0.0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  return is_aircraft ? aircraft(model, vtilde, cfg) : quad(s, model, vtilde, cfg);
}

}  // namespace flatpi::sim
