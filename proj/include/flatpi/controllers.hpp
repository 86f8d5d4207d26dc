#pragma once

#include "flatpi/geometry.hpp"
#include "flatpi/invariance.hpp"
#include "flatpi/models.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>

namespace flatpi::controllers {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using invariance::Ellipsoid;
using invariance::GainCert;
using invariance::TerminalCert;

/// u = phi_u(z, K (z - z_e(r))) with z = phi_x^-1(x).
double nominal_control(const models::FlatModel& model, const GainCert& gain, const VectorXd& x, double r = 0.0);

struct ClfValue {
  double V = 0.0;
  VectorXd grad;  // with respect to x
};

/// V = (z - z_e(r))' P (z - z_e(r)).
ClfValue clf_value_grad(const models::FlatModel& model, const MatrixXd& P, const VectorXd& x, double r = 0.0);

using StateFn = std::function<double(const VectorXd& x)>;

/// u_d(x) = phi_u(z, K_lqr z).
StateFn linear_flat_input(const models::FlatModel& model, const RowVectorXd& K);

struct ClfConfig {
  GainCert gain;
  Ellipsoid ellipsoid;
  StateFn u_desired;
  double u_bar = 0.0;
  /// Outside the certificate the interval can be empty; when set, return the
  /// admissible input that violates the decrease row least instead of
  /// throwing InfeasibleFilter.
  bool relax_infeasible = false;
};

enum class FilterStatus { Ok, OutsideCertificate, Relaxed };

struct FilterResult {
  double u = 0.0;
  FilterStatus status = FilterStatus::Ok;
  // the 1-D program: a u <= b, |u| <= u_bar
  double a = 0.0, b = 0.0;
  double V = 0.0;
};

/// Projection of u_d(x) onto [-u_bar, u_bar] cap {a u <= b}.
FilterResult clf_filter(const ClfConfig& cfg, const models::FlatModel& model, const VectorXd& x);

/// Closed form of min (u - u_d)^2 s.t. a u <= b, |u| <= u_bar; nullopt when
/// the interval is empty.
std::optional<double> clf_project(double u_d, double a, double b, double u_bar);

/// Same program through the QP solver (reference path for tests).
double clf_filter_qp(double u_d, double a, double b, double u_bar);

struct ErgConfig {
  double lambda = 20.0;
  double eta = 0.2;
  Ellipsoid ellipsoid;
  GainCert gain;
  double r_desired = 0.0;
  bool allow_negative_margin = false;
};

struct ErgTerms {
  double rho = 0.0, delta = 0.0, Vbar = 0.0;
};
ErgTerms erg_terms(const ErgConfig& cfg, const models::FlatModel& model, const VectorXd& x, double r_f);

/// One explicit Euler step of r_f' = rho(r_d, r_f) Delta(x, r_f).
double erg_step(const ErgConfig& cfg, const models::FlatModel& model, const VectorXd& x, double r_f, double dt);

struct MpcConfig {
  TerminalCert terminal;
  double horizon = 2.0;
  int steps = 20;
  geometry::PolyUnion vtilde;  // over (z, v)
  long node_limit = 20000;
  double dt() const { return horizon / steps; }
};

struct MpcSolution {
  VectorXd v;  // N inputs
  bool feasible = false;
  double cost = 0.0;
  long nodes = 0;
  MatrixXd z;  // (N+1) x n predicted flat states
};

/// Exact zero-order-hold discretization of z' = A z + B v (A nilpotent).
void zoh(const MatrixXd& A, const VectorXd& B, double h, MatrixXd& Ad, VectorXd& Bd);

/// Cost and feasibility of a given input sequence: each (z_k, v_k) and
/// (z_{k+1}, v_k) pair in one common cell, z_N in the terminal set.
double mpc_cost(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0, const VectorXd& v,
                MatrixXd* z = nullptr);
bool mpc_feasible(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0, const VectorXd& v);

/// Branch and bound over per-step cell choices. `warm` is a candidate input
/// sequence (e.g. the shifted previous plan); the nominal rollout v = K* z is
/// also tried. Throws InfeasibleMPC or NodeBudget.
MpcSolution fmpc_solve(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0,
                       const std::optional<VectorXd>& warm = std::nullopt);

}  // namespace flatpi::controllers
