#include "flatpi/error.hpp"
#include "flatpi/invariance.hpp"
#include "flatpi/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace flatpi::invariance {

using numerics::max_eigenvalue;
using numerics::min_eigenvalue;

double gain_residual(const MatrixXd& A, const VectorXd& B, const GainCert& c) {
  const MatrixXd Acl = A + B * c.K;
  const MatrixXd L = Acl.transpose() * c.P + c.P * Acl + 2.0 * c.kappa * c.P;
  return max_eigenvalue(0.5 * (L + L.transpose()));
}

GainCert synth_gain(const MatrixXd& A, const VectorXd& B, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("synth_gain: kappa must be positive");
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || B.size() != n) throw std::invalid_argument("synth_gain: shape mismatch");
  const MatrixXd Ak = A + kappa * MatrixXd::Identity(n, n);
  // (A+kI) Y + Y (A+kI)' = 2BB'  <=>  F'Y + YF + 2BB' = 0 with F = -(A+kI)'
  const MatrixXd Y = numerics::solve_lyapunov(-Ak.transpose(), 2.0 * B * B.transpose());
  const double lo = min_eigenvalue(Y);
  if (!(lo > 1e-10)) throw Error(ErrorCode::NotControllable, "stabilized Gramian is singular (min eig " + std::to_string(lo) + ")");
  GainCert c;
  c.kappa = kappa;
  c.Upsilon = Y;
  const Eigen::LLT<MatrixXd> llt(Y);
  c.P = llt.solve(MatrixXd::Identity(n, n));
  c.P = 0.5 * (c.P + c.P.transpose()).eval();
  c.K = -(B.transpose() * c.P);
  if (!numerics::is_positive_definite(c.P)) throw Error(ErrorCode::NotControllable, "P is not positive definite");
  const double res = gain_residual(A, B, c);
  // the equality instance makes the residual pure roundoff
  if (res > 1e-8 * std::max(1.0, c.P.norm()))
    throw Error(ErrorCode::NotControllable, "gain certificate residual " + std::to_string(res));
  return c;
}

TerminalCert synth_terminal(const MatrixXd& A, const VectorXd& B, const RowVectorXd& Kstar, const MatrixXd& Q,
                            double R, double delta) {
  const int n = static_cast<int>(A.rows());
  if (Kstar.size() != n || Q.rows() != n || Q.cols() != n) throw std::invalid_argument("synth_terminal: shape mismatch");
  if (!numerics::is_positive_definite(Q)) throw std::invalid_argument("synth_terminal: Q must be positive definite");
  if (!(R > 0.0) || !(delta > 0.0)) throw std::invalid_argument("synth_terminal: R and delta must be positive");
  const MatrixXd Acl = A + B * Kstar;
  const double abscissa = numerics::spectral_abscissa(Acl);
  if (!(abscissa < 0.0))
    throw Error(ErrorCode::NotHurwitz, "A + B K* has an eigenvalue with real part " + std::to_string(abscissa));
  TerminalCert t;
  t.Kstar = Kstar;
  t.Q = Q;
  t.R = R;
  t.delta = delta;
  t.M = Q + R * Kstar.transpose() * Kstar + delta * MatrixXd::Identity(n, n);
  t.Pstar = numerics::solve_lyapunov(Acl, t.M);
  if (!numerics::is_positive_definite(t.Pstar)) throw Error(ErrorCode::NotHurwitz, "P* is not positive definite");
  return t;
}

double terminal_decrease_residual(const MatrixXd& A, const VectorXd& B, const TerminalCert& t) {
  const MatrixXd Acl = A + B * t.Kstar;
  const MatrixXd L = Acl.transpose() * t.Pstar + t.Pstar * Acl + t.Q + t.R * t.Kstar.transpose() * t.Kstar;
  return max_eigenvalue(0.5 * (L + L.transpose()));
}

double ellipsoid_volume(const MatrixXd& P, double eps) {
  const double n = static_cast<double>(P.rows());
  const double unit = std::pow(M_PI, n / 2.0) / std::tgamma(n / 2.0 + 1.0);
  return unit * std::pow(eps, n / 2.0) / std::sqrt(P.determinant());
}

}  // namespace flatpi::invariance
