#include "flatpi/error.hpp"
#include "flatpi/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace flatpi::numerics {

MatrixXd solve_lyapunov(const MatrixXd& F, const MatrixXd& Qm) {
  const int n = static_cast<int>(F.rows());
  if (F.cols() != n || Qm.rows() != n || Qm.cols() != n)
    throw std::invalid_argument("solve_lyapunov: shape mismatch");

  // vec(F'X + XF) = (I kron F' + F' kron I) vec(X)
  const MatrixXd I = MatrixXd::Identity(n, n);
  const MatrixXd Ft = F.transpose();
  MatrixXd L = MatrixXd::Zero(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      L.block(i * n, j * n, n, n) += I(i, j) * Ft;
      L.block(i * n, j * n, n, n) += Ft(i, j) * I;
    }

  Eigen::JacobiSVD<MatrixXd> svd(L);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 1e-12 * std::max(1.0, s(0)))
    throw Error(ErrorCode::SingularPencil, "Lyapunov operator is singular (eigenvalues of F sum to ~0)");

  const VectorXd rhs = -Eigen::Map<const VectorXd>(Qm.data(), n * n);
  VectorXd x = L.fullPivLu().solve(rhs);
  MatrixXd X = Eigen::Map<MatrixXd>(x.data(), n, n);
  if ((Qm - Qm.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, Qm.cwiseAbs().maxCoeff()))
    X = 0.5 * (X + X.transpose()).eval();
  return X;
}

double min_eigenvalue(const MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_eigenvalue(const MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

bool is_positive_definite(const MatrixXd& symmetric) {
  Eigen::LLT<MatrixXd> llt(symmetric);
  return llt.info() == Eigen::Success;
}

double spectral_abscissa(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace flatpi::numerics
