#include "flatpi/error.hpp"
#include "flatpi/sim.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace flatpi::sim {
namespace {

std::string at(double t) {
  std::ostringstream os;
  os << " (t = " << t << ")";
  return os.str();
}

}  // namespace

SimTrace simulate(const models::FlatModel& model, const Controller& controller, const VectorXd& x0, double T,
                  double dt) {
  if (!(dt > 0.0) || !(T >= dt)) throw std::invalid_argument("simulate: need dt > 0 and T >= dt");
  const long steps = std::lround(T / dt);
  SimTrace tr;
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  tr.flat_states.reserve(steps + 1);
  tr.inputs.reserve(steps + 1);
  tr.virtual_inputs.reserve(steps + 1);
  tr.clf_values.reserve(steps + 1);
  tr.step_seconds.reserve(steps + 1);

  VectorXd x = x0;
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "state is not finite" + at(t));
    try {
      const auto c0 = std::chrono::steady_clock::now();
      const Action a = controller(t, x);
      tr.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count());
      if (!std::isfinite(a.u)) throw Error(ErrorCode::NonFinite, "controller returned a non-finite input" + at(t));

      tr.times.push_back(t);
      tr.states.push_back(x);
      tr.flat_states.push_back(model.to_flat(x));
      tr.inputs.push_back(a.u);
      tr.virtual_inputs.push_back(a.v);
      tr.clf_values.push_back(a.V);
      if (a.r_f) {
        if (!tr.references) tr.references.emplace();
        tr.references->resize(k, kNaN);
        tr.references->push_back(*a.r_f);
      }
      if (k == steps) break;

      const double u = a.u;
      const VectorXd k1 = model.eval_dynamics(x, u);
      const VectorXd k2 = model.eval_dynamics(x + 0.5 * dt * k1, u);
      const VectorXd k3 = model.eval_dynamics(x + 0.5 * dt * k2, u);
      const VectorXd k4 = model.eval_dynamics(x + dt * k3, u);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DomainError) throw Error(ErrorCode::DomainError, std::string(e.what()) + at(t));
      throw;
    }
  }
  if (tr.references) tr.references->resize(tr.times.size(), kNaN);
  return tr;
}

VerificationReport verify_invariance(const SimTrace& tr, const MatrixXd& P, double eps, double kappa, double u_bar,
                                     const VerifyOptions& opts) {
  if (tr.size() == 0) throw std::invalid_argument("verify_invariance: empty trace");
  VerificationReport r;
  const std::size_t n = tr.size();
  std::vector<double> V(n);
  for (std::size_t k = 0; k < n; ++k) {
    VectorXd e = tr.flat_states[k];
    if (tr.references && std::isfinite((*tr.references)[k])) e[0] -= (*tr.references)[k];
    V[k] = e.dot(P * e);
  }

  for (std::size_t k = 0; k < n; ++k) r.worst_input_ratio = std::max(r.worst_input_ratio, std::abs(tr.inputs[k]) / u_bar);
  r.constraint_ok = r.worst_input_ratio <= 1.0 + opts.input_rtol;
  if (!r.constraint_ok) r.notes.push_back("input bound exceeded");

  const double cap = eps * (1.0 + opts.level_rtol);
  for (std::size_t k = 0; k < n; ++k) {
    if (!r.entered && V[k] <= cap) {
      r.entered = true;
      r.entry_time = tr.times[k];
    }
    if (r.entered) r.max_level_ratio = std::max(r.max_level_ratio, V[k] / eps);
  }
  r.invariance_ok = !r.entered || r.max_level_ratio <= 1.0 + opts.level_rtol;
  if (!r.entered) r.notes.push_back("trace never enters the level set");
  else if (!r.invariance_ok) r.notes.push_back("trace leaves the level set after entering it");

  if (opts.check_decrease && n > 1) {
    r.decrease_checked = true;
    const double dt = tr.dt();
    double vmax = 0.0;
    for (double v : V) vmax = std::max(vmax, v);
    r.decrease_tol = opts.decrease_scale * dt * vmax;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (V[k] > cap) continue;
      r.max_decrease = std::max(r.max_decrease, (V[k + 1] - V[k]) / dt + kappa * V[k]);
    }
    r.decrease_ok = !(r.max_decrease > r.decrease_tol);
    if (!r.decrease_ok) r.notes.push_back("decrease rate below kappa");
  }
  return r;
}

nlohmann::json to_json(const VerificationReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"ok", r.ok()},
          {"constraint_ok", r.constraint_ok},
          {"worst_input_ratio", r.worst_input_ratio},
          {"invariance_ok", r.invariance_ok},
          {"entered", r.entered},
          {"entry_time", num(r.entry_time)},
          {"max_level_ratio", r.max_level_ratio},
          {"decrease_checked", r.decrease_checked},
          {"decrease_ok", r.decrease_ok},
          {"max_decrease", num(r.max_decrease)},
          {"decrease_tol", r.decrease_tol},
          {"notes", r.notes}};
}

Timing timing_of(const SimTrace& t) {
  Timing out;
  out.calls = t.step_seconds.size();
  double sum = 0.0;
  for (double s : t.step_seconds) {
    sum += s;
    out.max = std::max(out.max, s);
  }
  if (out.calls) out.mean = sum / static_cast<double>(out.calls);
  return out;
}

}  // namespace flatpi::sim
