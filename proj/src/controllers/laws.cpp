#include "flatpi/controllers.hpp"
#include "flatpi/error.hpp"
#include "flatpi/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace flatpi::controllers {

double nominal_control(const models::FlatModel& model, const GainCert& gain, const VectorXd& x, double r) {
  const VectorXd z = model.to_flat(x);
  return model.flat_input(z, gain.K.dot(z - model.flat_equilibrium(r)));
}

ClfValue clf_value_grad(const models::FlatModel& model, const MatrixXd& P, const VectorXd& x, double r) {
  const VectorXd e = model.to_flat(x) - model.flat_equilibrium(r);
  ClfValue out;
  out.V = e.dot(P * e);
  out.grad = model.flat_state_jacobian(x).transpose() * ((P + P.transpose()) * e);
  return out;
}

StateFn linear_flat_input(const models::FlatModel& model, const RowVectorXd& K) {
  return [&model, K](const VectorXd& x) {
    const VectorXd z = model.to_flat(x);
    return model.flat_input(z, K.dot(z));
  };
}

FilterResult clf_filter(const ClfConfig& cfg, const models::FlatModel& model, const VectorXd& x) {
  const ClfValue c = clf_value_grad(model, cfg.ellipsoid.P, x);
  FilterResult out;
  out.V = c.V;
  out.a = c.grad.dot(model.g(x));
  out.b = -cfg.gain.kappa * c.V - c.grad.dot(model.f(x));
  if (c.V > cfg.ellipsoid.eps_level) out.status = FilterStatus::OutsideCertificate;

  const auto u = clf_project(cfg.u_desired(x), out.a, out.b, cfg.u_bar);
  if (!u) {
    if (!cfg.relax_infeasible)
      throw Error(ErrorCode::InfeasibleFilter, "decrease condition cannot be met within the input bound (V = " +
                                                   std::to_string(c.V) + ")");
    // least violation of a u <= b over the input interval
    out.u = out.a > 0.0 ? -cfg.u_bar : cfg.u_bar;
    out.status = FilterStatus::Relaxed;
    return out;
  }
  out.u = *u;
  return out;
}

std::optional<double> clf_project(double u_d, double a, double b, double u_bar) {
  double lo = -u_bar, hi = u_bar;
  if (a > 0.0) hi = std::min(hi, b / a);
  else if (a < 0.0) lo = std::max(lo, b / a);
  else if (b < 0.0) return std::nullopt;  // 0 <= b fails for every u
  if (lo > hi) return std::nullopt;
  return std::clamp(u_d, lo, hi);
}

double clf_filter_qp(double u_d, double a, double b, double u_bar) {
  numerics::QuadraticProgram qp;
  qp.hess = MatrixXd::Constant(1, 1, 2.0);
  qp.lin = VectorXd::Constant(1, -2.0 * u_d);
  qp.ineq_lhs = (MatrixXd(3, 1) << a, 1.0, -1.0).finished();
  qp.ineq_rhs = Eigen::Vector3d(b, u_bar, u_bar);
  qp.eq_lhs.resize(0, 1);
  qp.eq_rhs.resize(0);
  const auto s = numerics::solve_qp(qp);
  if (!s.optimal()) throw Error(ErrorCode::InfeasibleFilter, "filter QP has no solution");
  return (*s.point)[0];
}

ErgTerms erg_terms(const ErgConfig& cfg, const models::FlatModel& model, const VectorXd& x, double r_f) {
  ErgTerms t;
  const double gap = cfg.r_desired - r_f;
  t.rho = gap / std::max(std::abs(gap), cfg.eta);
  t.Vbar = clf_value_grad(model, cfg.ellipsoid.P, x, r_f).V;
  t.delta = cfg.lambda * (cfg.ellipsoid.eps_level - t.Vbar);
  if (!cfg.allow_negative_margin) t.delta = std::max(t.delta, 0.0);
  return t;
}

double erg_step(const ErgConfig& cfg, const models::FlatModel& model, const VectorXd& x, double r_f, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("erg_step: dt must be positive");
  const ErgTerms t = erg_terms(cfg, model, x, r_f);
  return r_f + dt * t.rho * t.delta;
}

}  // namespace flatpi::controllers
