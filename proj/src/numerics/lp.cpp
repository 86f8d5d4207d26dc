#include "flatpi/numerics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace flatpi::numerics {
namespace {

constexpr double kPivotTol = 1e-10;
constexpr double kReducedCostTol = 1e-10;

// Dense tableau in equality form  T[:, 0..ncols) y = T[:, ncols],  y >= 0.
struct Tableau {
  MatrixXd t;
  std::vector<int> basis;

  int rows() const { return static_cast<int>(t.rows()); }
  int cols() const { return static_cast<int>(t.cols()) - 1; }
  double rhs(int i) const { return t(i, cols()); }

  void pivot(int r, int c) {
    t.row(r) /= t(r, c);
    for (int i = 0; i < rows(); ++i) {
      if (i == r) continue;
      const double f = t(i, c);
      if (f != 0.0) t.row(i) -= f * t.row(r);
    }
    basis[r] = c;
  }

  void drop_row(int r) {
    const int n = rows() - 1;
    if (r < n) t.block(r, 0, n - r, t.cols()) = t.block(r + 1, 0, n - r, t.cols()).eval();
    t.conservativeResize(n, Eigen::NoChange);
    basis.erase(basis.begin() + r);
  }
};

enum class PhaseResult { Optimal, Unbounded, MaxIter };

// Minimizes cost'y over the tableau using Bland's rule (lowest-index entering
// column, lowest basic index among ratio ties). `allowed` masks columns that
// may enter the basis.
PhaseResult run_simplex(Tableau& tab, const VectorXd& cost, const std::vector<bool>& allowed,
                        int max_iter, int& iterations) {
  const int m = tab.rows();
  const int n = tab.cols();
  for (;;) {
    if (iterations >= max_iter) return PhaseResult::MaxIter;
    int enter = -1;
    for (int j = 0; j < n && enter < 0; ++j) {
      if (!allowed[j]) continue;
      double reduced = cost[j];
      for (int i = 0; i < m; ++i) reduced -= cost[tab.basis[i]] * tab.t(i, j);
      if (reduced < -kReducedCostTol) enter = j;
    }
    if (enter < 0) return PhaseResult::Optimal;

    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = tab.t(i, enter);
      if (a <= kPivotTol) continue;
      const double ratio = std::max(tab.rhs(i), 0.0) / a;
      if (ratio < best - 1e-14 ||
          (std::abs(ratio - best) <= 1e-14 && leave >= 0 && tab.basis[i] < tab.basis[leave])) {
        best = ratio;
        leave = i;
      }
    }
    if (leave < 0) return PhaseResult::Unbounded;
    tab.pivot(leave, enter);
    ++iterations;
  }
}

}  // namespace

SolveStatus solve_lp(const LinearProgram& lp, const LpOptions& opts) {
  const int d = static_cast<int>(lp.cost.size());
  SolveStatus status;

  // Normalize rows; zero rows are either vacuous or certify infeasibility.
  std::vector<int> keep;
  std::vector<double> scale;
  for (int i = 0; i < lp.ineq_lhs.rows(); ++i) {
    const double s = lp.ineq_lhs.row(i).lpNorm<Eigen::Infinity>();
    if (s == 0.0) {
      if (lp.ineq_rhs[i] < -opts.infeasibility_threshold) {
        status.kind = SolveKind::Infeasible;
        status.objective = -lp.ineq_rhs[i];
        return status;
      }
      continue;
    }
    keep.push_back(i);
    scale.push_back(s);
  }
  const int m = static_cast<int>(keep.size());

  // Columns: x+ (d), x- (d), slacks (m), artificials (one per negative rhs).
  std::vector<int> art_row;
  for (int k = 0; k < m; ++k)
    if (lp.ineq_rhs[keep[k]] / scale[k] < 0.0) art_row.push_back(k);
  const int na = static_cast<int>(art_row.size());
  const int ncols = 2 * d + m + na;

  Tableau tab;
  tab.t = MatrixXd::Zero(m, ncols + 1);
  tab.basis.assign(m, -1);
  int next_art = 2 * d + m;
  for (int k = 0; k < m; ++k) {
    const int i = keep[k];
    Eigen::RowVectorXd a = lp.ineq_lhs.row(i) / scale[k];
    double b = lp.ineq_rhs[i] / scale[k];
    double slack = 1.0;
    if (b < 0.0) {
      a = -a;
      b = -b;
      slack = -1.0;
    }
    tab.t.block(k, 0, 1, d) = a;
    tab.t.block(k, d, 1, d) = -a;
    tab.t(k, 2 * d + k) = slack;
    tab.t(k, ncols) = b;
    if (slack > 0.0) {
      tab.basis[k] = 2 * d + k;
    } else {
      tab.t(k, next_art) = 1.0;
      tab.basis[k] = next_art++;
    }
  }

  int iterations = 0;
  std::vector<bool> allowed(ncols, true);

  if (na > 0) {
    VectorXd phase1 = VectorXd::Zero(ncols);
    phase1.tail(na).setOnes();
    const PhaseResult r = run_simplex(tab, phase1, allowed, opts.max_iter, iterations);
    if (r == PhaseResult::MaxIter) {
      status.kind = SolveKind::MaxIter;
      status.iterations = iterations;
      return status;
    }
    double infeas = 0.0;
    for (int i = 0; i < tab.rows(); ++i)
      if (tab.basis[i] >= 2 * d + m) infeas += tab.rhs(i);
    if (infeas > opts.infeasibility_threshold) {
      status.kind = SolveKind::Infeasible;
      status.objective = infeas;
      status.iterations = iterations;
      return status;
    }
    // Drive remaining (zero-level) artificials out of the basis.
    for (int i = 0; i < tab.rows();) {
      if (tab.basis[i] < 2 * d + m) {
        ++i;
        continue;
      }
      int col = -1;
      for (int j = 0; j < 2 * d + m && col < 0; ++j)
        if (std::abs(tab.t(i, j)) > 1e-9) col = j;
      if (col >= 0) {
        tab.pivot(i, col);
        ++i;
      } else {
        tab.drop_row(i);
      }
    }
    for (int j = 2 * d + m; j < ncols; ++j) allowed[j] = false;
  }

  VectorXd cost = VectorXd::Zero(ncols);
  cost.head(d) = lp.cost;
  cost.segment(d, d) = -lp.cost;
  const PhaseResult r = run_simplex(tab, cost, allowed, opts.max_iter, iterations);
  status.iterations = iterations;
  if (r == PhaseResult::MaxIter) {
    status.kind = SolveKind::MaxIter;
    return status;
  }
  if (r == PhaseResult::Unbounded) {
    status.kind = SolveKind::Unbounded;
    status.objective = -std::numeric_limits<double>::infinity();
    return status;
  }

  VectorXd y = VectorXd::Zero(ncols);
  for (int i = 0; i < tab.rows(); ++i) y[tab.basis[i]] = tab.rhs(i);
  VectorXd x = y.head(d) - y.segment(d, d);
  status.kind = SolveKind::Optimal;
  status.objective = lp.cost.dot(x);
  status.point = std::move(x);
  return status;
}

}  // namespace flatpi::numerics
