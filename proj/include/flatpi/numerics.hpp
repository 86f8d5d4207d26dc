#pragma once

// Dense LP / QP / Lyapunov kernels sized for the small problems of this
// library (a handful of variables, a few hundred rows at most).

#include <Eigen/Dense>

#include <optional>

namespace flatpi::numerics {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SolveKind { Optimal, Infeasible, Unbounded, MaxIter };

struct SolveStatus {
  SolveKind kind = SolveKind::MaxIter;
  double objective = 0.0;
  /// Present iff kind == Optimal.
  std::optional<VectorXd> point;
  int iterations = 0;
  /// QP only: multipliers of the inequality and equality rows at the optimum.
  VectorXd ineq_multipliers;
  VectorXd eq_multipliers;

  bool optimal() const { return kind == SolveKind::Optimal; }
};

/// min cost'x  s.t.  ineq_lhs x <= ineq_rhs, x free.
struct LinearProgram {
  VectorXd cost;
  MatrixXd ineq_lhs;
  VectorXd ineq_rhs;
};

/// min 0.5 x'Hx + lin'x  s.t.  ineq_lhs x <= ineq_rhs, eq_lhs x = eq_rhs.
/// The equality block may be empty (zero rows).
struct QuadraticProgram {
  MatrixXd hess;
  VectorXd lin;
  MatrixXd ineq_lhs;
  VectorXd ineq_rhs;
  MatrixXd eq_lhs;
  VectorXd eq_rhs;
};

struct LpOptions {
  int max_iter = 20000;
  /// Phase-1 optimum above this value certifies infeasibility.
  double infeasibility_threshold = 1e-9;
};

/// Auto: dual (Goldfarb-Idnani) when the Hessian is positive definite,
/// primal otherwise.
enum class QpMethod { Auto, Primal, Dual };

struct QpOptions {
  int max_iter = 5000;
  QpMethod method = QpMethod::Auto;
  /// Optional starting point for the primal method; used only if it is
  /// feasible within feas_tol. The dual method always starts unconstrained.
  std::optional<VectorXd> warm_start;
  double feas_tol = 1e-9;
};

/// Two-phase dense tableau simplex with Bland's rule. Rows are scaled to
/// unit infinity norm internally, so the phase-1 threshold is scale-free.
SolveStatus solve_lp(const LinearProgram& lp, const LpOptions& opts = {});

/// Active-set QP. The primal method handles positive semidefinite Hessians
/// (zero-curvature directions are followed up to the first blocking row) and
/// gets a feasible start from the warm start or an elastic phase 1. The dual
/// method needs H > 0 and adds violated rows one at a time from the
/// unconstrained minimum.
SolveStatus solve_qp(const QuadraticProgram& qp, const QpOptions& opts = {});

/// Max-norm KKT residual of an Optimal QP status: stationarity, primal
/// feasibility, dual feasibility and complementarity.
double qp_kkt_residual(const QuadraticProgram& qp, const SolveStatus& status);

/// Objective value 0.5 x'Hx + lin'x.
double qp_objective(const QuadraticProgram& qp, const VectorXd& x);

/// Solves F'X + XF + Qm = 0 through the vectorized Kronecker system.
/// Throws Error(SingularPencil) when eigenvalues of F sum to ~0.
MatrixXd solve_lyapunov(const MatrixXd& F, const MatrixXd& Qm);

double min_eigenvalue(const MatrixXd& symmetric);
double max_eigenvalue(const MatrixXd& symmetric);
bool is_positive_definite(const MatrixXd& symmetric);

/// Largest real part among the eigenvalues of a general square matrix.
double spectral_abscissa(const MatrixXd& m);

}  // namespace flatpi::numerics
