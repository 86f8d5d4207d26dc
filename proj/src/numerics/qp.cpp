#include "flatpi/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace flatpi::numerics {
namespace {

enum class CoreResult { Optimal, Unbounded, MaxIter };

// Normalized problem data shared by phase 1 and phase 2.
struct Rows {
  MatrixXd a;  // inequality rows, unit 2-norm
  VectorXd b;
  MatrixXd e;  // equality rows, unit 2-norm
  VectorXd f;
};

struct ActiveSetState {
  VectorXd x;
  std::vector<int> working;  // indices into Rows::a
  VectorXd lambda_ineq;      // aligned with Rows::a (zeros off the working set)
  VectorXd lambda_eq;
  int iterations = 0;
};

double max_violation(const Rows& rows, const VectorXd& x) {
  double v = 0.0;
  if (rows.a.rows() > 0) v = std::max(v, (rows.a * x - rows.b).maxCoeff());
  if (rows.e.rows() > 0) v = std::max(v, (rows.e * x - rows.f).cwiseAbs().maxCoeff());
  return v;
}

MatrixXd working_matrix(const Rows& rows, const std::vector<int>& working) {
  const int d = static_cast<int>(rows.a.cols());
  MatrixXd aw(rows.e.rows() + static_cast<Eigen::Index>(working.size()), d);
  aw.topRows(rows.e.rows()) = rows.e;
  for (size_t k = 0; k < working.size(); ++k) aw.row(rows.e.rows() + k) = rows.a.row(working[k]);
  return aw;
}

// Orthonormal basis of null(aw).
MatrixXd null_space(const MatrixXd& aw, int d) {
  if (aw.rows() == 0) return MatrixXd::Identity(d, d);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(aw.transpose());
  qr.setThreshold(1e-11);
  const int r = static_cast<int>(qr.rank());
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(d, d);
  return q.rightCols(d - r);
}

// Core primal active-set iteration from a feasible point. `bland` selects the
// lowest-index rule for dropping constraints (anti-cycling for linear
// objectives); otherwise the most negative multiplier is dropped.
CoreResult active_set(const MatrixXd& h, const VectorXd& c, const Rows& rows, ActiveSetState& st,
                      int max_iter, bool bland) {
  const int d = static_cast<int>(c.size());
  const int m = static_cast<int>(rows.a.rows());
  std::vector<bool> in_w(m, false);
  for (int i : st.working) in_w[i] = true;

  for (; st.iterations < max_iter; ++st.iterations) {
    const VectorXd g = h * st.x + c;
    const MatrixXd aw = working_matrix(rows, st.working);
    const MatrixXd z = null_space(aw, d);

    VectorXd p = VectorXd::Zero(d);
    bool ray = false;
    if (z.cols() > 0) {
      const MatrixXd hr = z.transpose() * h * z;
      const VectorXd gr = z.transpose() * g;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (hr + hr.transpose()));
      const VectorXd lam = es.eigenvalues();
      const MatrixXd& v = es.eigenvectors();
      const VectorXd w = v.transpose() * gr;
      const double lam_tol = 1e-10 * std::max(1.0, lam.cwiseAbs().maxCoeff());
      const double grad_tol = 1e-12 * (1.0 + g.norm());
      VectorXd pr = VectorXd::Zero(z.cols());
      for (int k = 0; k < lam.size(); ++k)
        if (lam[k] <= lam_tol && std::abs(w[k]) > grad_tol) {
          ray = true;
          pr -= w[k] * v.col(k);
        }
      if (!ray)
        for (int k = 0; k < lam.size(); ++k)
          if (lam[k] > lam_tol) pr -= (w[k] / lam[k]) * v.col(k);
      p = z * pr;
    }

    if (p.norm() <= 1e-12 * (1.0 + st.x.norm())) {
      // Stationary on the working set: check multiplier signs.
      VectorXd lambda = VectorXd::Zero(aw.rows());
      if (aw.rows() > 0) lambda = aw.transpose().colPivHouseholderQr().solve(-g);
      const int ne = static_cast<int>(rows.e.rows());
      const double mult_tol = 1e-10 * (1.0 + g.norm());
      int drop = -1;
      double most_negative = -mult_tol;
      for (size_t k = 0; k < st.working.size(); ++k) {
        const double l = lambda[ne + static_cast<int>(k)];
        if (l >= -mult_tol) continue;
        if (bland) {
          if (drop < 0 || st.working[k] < st.working[drop]) drop = static_cast<int>(k);
        } else if (l < most_negative) {
          most_negative = l;
          drop = static_cast<int>(k);
        }
      }
      if (drop < 0) {
        st.lambda_ineq = VectorXd::Zero(m);
        for (size_t k = 0; k < st.working.size(); ++k)
          st.lambda_ineq[st.working[k]] = std::max(0.0, lambda[ne + static_cast<int>(k)]);
        st.lambda_eq = lambda.head(ne);
        return CoreResult::Optimal;
      }
      in_w[st.working[drop]] = false;
      st.working.erase(st.working.begin() + drop);
      continue;
    }

    // Ratio test against rows outside the working set.
    double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
    int block = -1;
    const double pnorm = p.norm();
    for (int i = 0; i < m; ++i) {
      if (in_w[i]) continue;
      const double ap = rows.a.row(i).dot(p);
      if (ap <= 1e-12 * pnorm) continue;
      const double slack = std::max(0.0, rows.b[i] - rows.a.row(i).dot(st.x));
      const double step = slack / ap;
      if (step < alpha) {
        alpha = step;
        block = i;
      }
    }
    if (!std::isfinite(alpha)) return CoreResult::Unbounded;
    st.x += alpha * p;
    if (block >= 0) {
      st.working.push_back(block);
      in_w[block] = true;
    }
  }
  return CoreResult::MaxIter;
}

// Goldfarb-Idnani dual active set on the normalized rows. Rows are used in
// the form n'x + c >= 0 (n = -a, c = b for a x <= b). Factors are rebuilt on
// every change of the active set; d stays small here.
enum class DualResult { Optimal, Infeasible, MaxIter };

DualResult dual_active_set(const MatrixXd& h, const VectorXd& c, const Rows& rows, VectorXd& x, VectorXd& lam_ineq,
                           VectorXd& lam_eq, int& iterations, int max_iter, double tol) {
  const int d = static_cast<int>(c.size());
  const int m = static_cast<int>(rows.a.rows());
  const int ne = static_cast<int>(rows.e.rows());
  const Eigen::LLT<MatrixXd> llt(h);
  // J = L^{-T}, so H^{-1} = J J'
  const MatrixXd J = llt.matrixU().solve(MatrixXd::Identity(d, d));
  x = -llt.solve(c);

  // active set: -1 - e for equality e, i >= 0 for inequality i
  std::vector<int> act;
  std::vector<double> u;
  auto normal = [&](int id) -> VectorXd {
    return id >= 0 ? VectorXd(-rows.a.row(id).transpose()) : VectorXd(rows.e.row(-1 - id).transpose());
  };
  auto slack = [&](int id) {
    return id >= 0 ? rows.b[id] - rows.a.row(id).dot(x) : rows.e.row(-1 - id).dot(x) - rows.f[-1 - id];
  };

  // z: primal step direction, r: multiplier change of the active rows
  auto directions = [&](const VectorXd& np, VectorXd& z, VectorXd& r) {
    const int q = static_cast<int>(act.size());
    const VectorXd dv = J.transpose() * np;
    if (q == 0) {
      z = J * dv;
      r.resize(0);
      return;
    }
    MatrixXd N(d, q);
    for (int k = 0; k < q; ++k) N.col(k) = normal(act[k]);
    const Eigen::HouseholderQR<MatrixXd> qr(J.transpose() * N);
    const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(d, d);
    const VectorXd qd = Q.transpose() * dv;
    z = J * (Q.rightCols(d - q) * qd.tail(d - q));
    const MatrixXd R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
    r = R.triangularView<Eigen::Upper>().solve(qd.head(q));
  };

  auto drop = [&](int k) {
    act.erase(act.begin() + k);
    u.erase(u.begin() + k);
  };

  // equalities: full steps, never dropped
  for (int e = 0; e < ne; ++e) {
    const int id = -1 - e;
    const VectorXd np = normal(id);
    VectorXd z, r;
    directions(np, z, r);
    const double zn = z.dot(np);
    const double s = slack(id);
    if (zn <= 1e-14 * np.squaredNorm()) {
      if (std::abs(s) > tol) return DualResult::Infeasible;
      continue;  // dependent and consistent
    }
    const double t = -s / zn;
    x += t * z;
    for (std::size_t k = 0; k < act.size(); ++k) u[k] -= t * r[k];
    act.push_back(id);
    u.push_back(t);
  }

  std::vector<bool> in_act(m, false);
  for (int id : act)
    if (id >= 0) in_act[id] = true;

  for (; iterations < max_iter; ++iterations) {
    // most violated inequality
    int p = -1;
    double worst = -tol;
    for (int i = 0; i < m; ++i) {
      if (in_act[i]) continue;
      const double s = slack(i);
      if (s < worst) worst = s, p = i;
    }
    if (p < 0) break;

    const VectorXd np = normal(p);
    double up = 0.0;
    for (; iterations < max_iter; ++iterations) {
      VectorXd z, r;
      directions(np, z, r);
      const double zn = z.dot(np);
      // dual (partial) step bound over active inequalities
      double t1 = std::numeric_limits<double>::infinity();
      int l = -1;
      for (std::size_t k = 0; k < act.size(); ++k)
        if (act[k] >= 0 && r[k] > 1e-14 && u[k] / r[k] < t1) t1 = u[k] / r[k], l = static_cast<int>(k);
      const bool dependent = zn <= 1e-14 * np.squaredNorm();
      const double t2 = dependent ? std::numeric_limits<double>::infinity() : -slack(p) / zn;
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return DualResult::Infeasible;
      if (!dependent) x += t * z;
      for (std::size_t k = 0; k < act.size(); ++k) u[k] -= t * r[k];
      up += t;
      if (t == t2) {
        act.push_back(p);
        u.push_back(up);
        in_act[p] = true;
        break;
      }
      in_act[act[l]] = false;
      drop(l);
    }
  }
  if (iterations >= max_iter) return DualResult::MaxIter;

  lam_ineq = VectorXd::Zero(m);
  lam_eq = VectorXd::Zero(ne);
  for (std::size_t k = 0; k < act.size(); ++k) {
    if (act[k] >= 0) lam_ineq[act[k]] = std::max(0.0, u[k]);
    else lam_eq[-1 - act[k]] = -u[k];
  }
  return DualResult::Optimal;
}

// Greedily collects linearly independent rows active at x.
std::vector<int> initial_working_set(const Rows& rows, const VectorXd& x, double tol) {
  std::vector<int> working;
  const int d = static_cast<int>(x.size());
  for (int i = 0; i < rows.a.rows(); ++i) {
    if (std::abs(rows.a.row(i).dot(x) - rows.b[i]) > tol) continue;
    std::vector<int> trial = working;
    trial.push_back(i);
    const MatrixXd aw = working_matrix(rows, trial);
    if (aw.rows() > d) break;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(aw);
    qr.setThreshold(1e-11);
    if (qr.rank() == aw.rows()) working = std::move(trial);
  }
  return working;
}

Rows normalize(const QuadraticProgram& qp, std::vector<int>& ineq_map, VectorXd& ineq_scale,
               std::vector<int>& eq_map, VectorXd& eq_scale, bool& trivially_infeasible,
               double tol) {
  const int d = static_cast<int>(qp.lin.size());
  Rows rows;
  std::vector<int> keep;
  std::vector<double> sc;
  for (int i = 0; i < qp.ineq_lhs.rows(); ++i) {
    const double s = qp.ineq_lhs.row(i).norm();
    if (s == 0.0) {
      if (qp.ineq_rhs[i] < -tol) trivially_infeasible = true;
      continue;
    }
    keep.push_back(i);
    sc.push_back(s);
  }
  rows.a.resize(static_cast<Eigen::Index>(keep.size()), d);
  rows.b.resize(static_cast<Eigen::Index>(keep.size()));
  ineq_scale.resize(static_cast<Eigen::Index>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    rows.a.row(k) = qp.ineq_lhs.row(keep[k]) / sc[k];
    rows.b[k] = qp.ineq_rhs[keep[k]] / sc[k];
    ineq_scale[k] = sc[k];
  }
  ineq_map = keep;

  keep.clear();
  sc.clear();
  for (int i = 0; i < qp.eq_lhs.rows(); ++i) {
    const double s = qp.eq_lhs.row(i).norm();
    if (s == 0.0) {
      if (std::abs(qp.eq_rhs[i]) > tol) trivially_infeasible = true;
      continue;
    }
    keep.push_back(i);
    sc.push_back(s);
  }
  rows.e.resize(static_cast<Eigen::Index>(keep.size()), d);
  rows.f.resize(static_cast<Eigen::Index>(keep.size()));
  eq_scale.resize(static_cast<Eigen::Index>(keep.size()));
  for (size_t k = 0; k < keep.size(); ++k) {
    rows.e.row(k) = qp.eq_lhs.row(keep[k]) / sc[k];
    rows.f[k] = qp.eq_rhs[keep[k]] / sc[k];
    eq_scale[k] = sc[k];
  }
  eq_map = keep;
  return rows;
}

void validate(const QuadraticProgram& qp) {
  const auto d = qp.lin.size();
  if (qp.hess.rows() != d || qp.hess.cols() != d) throw std::invalid_argument("qp: hess shape");
  if (qp.ineq_lhs.rows() != qp.ineq_rhs.size() || (qp.ineq_lhs.rows() > 0 && qp.ineq_lhs.cols() != d))
    throw std::invalid_argument("qp: inequality shape");
  if (qp.eq_lhs.rows() != qp.eq_rhs.size() || (qp.eq_lhs.rows() > 0 && qp.eq_lhs.cols() != d))
    throw std::invalid_argument("qp: equality shape");
  if ((qp.hess - qp.hess.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, qp.hess.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("qp: hess not symmetric");
  if (d > 0 && min_eigenvalue(qp.hess) < -1e-10 * std::max(1.0, qp.hess.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("qp: hess not positive semidefinite");
}

}  // namespace

double qp_objective(const QuadraticProgram& qp, const VectorXd& x) {
  return 0.5 * x.dot(qp.hess * x) + qp.lin.dot(x);
}

SolveStatus solve_qp(const QuadraticProgram& qp, const QpOptions& opts) {
  validate(qp);
  const int d = static_cast<int>(qp.lin.size());
  SolveStatus status;

  std::vector<int> ineq_map, eq_map;
  VectorXd ineq_scale, eq_scale;
  bool trivially_infeasible = false;
  const Rows rows = normalize(qp, ineq_map, ineq_scale, eq_map, eq_scale, trivially_infeasible,
                              opts.feas_tol);
  if (trivially_infeasible) {
    status.kind = SolveKind::Infeasible;
    return status;
  }
  const int m = static_cast<int>(rows.a.rows());
  const int ne = static_cast<int>(rows.e.rows());

  bool use_dual = opts.method == QpMethod::Dual;
  if (opts.method != QpMethod::Primal && d > 0) {
    const double top = std::max(1.0, qp.hess.cwiseAbs().maxCoeff());
    const bool pd = min_eigenvalue(qp.hess) > 1e-9 * top;
    if (use_dual && !pd) throw std::invalid_argument("solve_qp: the dual method needs a positive definite Hessian");
    use_dual = pd;
  }
  if (use_dual) {
    VectorXd x, li, le;
    int it = 0;
    const DualResult r = dual_active_set(qp.hess, qp.lin, rows, x, li, le, it, opts.max_iter, opts.feas_tol);
    status.iterations = it;
    if (r == DualResult::MaxIter) {
      status.kind = SolveKind::MaxIter;
      return status;
    }
    if (r == DualResult::Infeasible) {
      status.kind = SolveKind::Infeasible;
      return status;
    }
    status.kind = SolveKind::Optimal;
    status.objective = qp_objective(qp, x);
    status.point = x;
    status.ineq_multipliers = VectorXd::Zero(qp.ineq_lhs.rows());
    for (int k = 0; k < m; ++k) status.ineq_multipliers[ineq_map[k]] = li[k] / ineq_scale[k];
    status.eq_multipliers = VectorXd::Zero(qp.eq_lhs.rows());
    for (int k = 0; k < ne; ++k) status.eq_multipliers[eq_map[k]] = le[k] / eq_scale[k];
    return status;
  }

  VectorXd x0 = opts.warm_start && opts.warm_start->size() == d ? *opts.warm_start : VectorXd::Zero(d);
  int iterations = 0;

  if (max_violation(rows, x0) > opts.feas_tol) {
    // Project onto the equality manifold, then minimize the uniform
    // violation t over (x, t) with a zero Hessian.
    if (ne > 0) {
      const VectorXd r = rows.f - rows.e * x0;
      x0 += rows.e.transpose() * (rows.e * rows.e.transpose()).ldlt().solve(r);
    }
    if (max_violation(rows, x0) > opts.feas_tol) {
      Rows ph;
      ph.a = MatrixXd::Zero(m + 1, d + 1);
      ph.a.topLeftCorner(m, d) = rows.a;
      ph.a.block(0, d, m, 1).setConstant(-1.0);
      ph.a(m, d) = -1.0;
      ph.b = VectorXd::Zero(m + 1);
      ph.b.head(m) = rows.b;
      ph.e = MatrixXd::Zero(ne, d + 1);
      ph.e.leftCols(d) = rows.e;
      ph.f = rows.f;
      ActiveSetState st;
      st.x = VectorXd::Zero(d + 1);
      st.x.head(d) = x0;
      st.x[d] = std::max(0.0, m > 0 ? (rows.a * x0 - rows.b).maxCoeff() : 0.0);
      st.working = initial_working_set(ph, st.x, 1e-12);
      VectorXd c = VectorXd::Zero(d + 1);
      c[d] = 1.0;
      const CoreResult r =
          active_set(MatrixXd::Zero(d + 1, d + 1), c, ph, st, opts.max_iter, /*bland=*/true);
      iterations = st.iterations;
      if (r == CoreResult::MaxIter) {
        status.kind = SolveKind::MaxIter;
        status.iterations = iterations;
        return status;
      }
      if (st.x[d] > opts.feas_tol || max_violation(rows, st.x.head(d)) > 10 * opts.feas_tol) {
        status.kind = SolveKind::Infeasible;
        status.objective = st.x[d];
        status.iterations = iterations;
        return status;
      }
      x0 = st.x.head(d);
    }
  }

  ActiveSetState st;
  st.x = x0;
  st.iterations = iterations;
  st.working = initial_working_set(rows, x0, opts.feas_tol);
  const CoreResult r = active_set(qp.hess, qp.lin, rows, st, opts.max_iter, /*bland=*/false);
  status.iterations = st.iterations;
  if (r == CoreResult::MaxIter) {
    status.kind = SolveKind::MaxIter;
    return status;
  }
  if (r == CoreResult::Unbounded) {
    status.kind = SolveKind::Unbounded;
    status.objective = -std::numeric_limits<double>::infinity();
    return status;
  }

  status.kind = SolveKind::Optimal;
  status.objective = qp_objective(qp, st.x);
  status.point = st.x;
  status.ineq_multipliers = VectorXd::Zero(qp.ineq_lhs.rows());
  for (int k = 0; k < m; ++k) status.ineq_multipliers[ineq_map[k]] = st.lambda_ineq[k] / ineq_scale[k];
  status.eq_multipliers = VectorXd::Zero(qp.eq_lhs.rows());
  for (int k = 0; k < ne; ++k) status.eq_multipliers[eq_map[k]] = st.lambda_eq[k] / eq_scale[k];
  return status;
}

double qp_kkt_residual(const QuadraticProgram& qp, const SolveStatus& status) {
  if (!status.point) return std::numeric_limits<double>::infinity();
  const VectorXd& x = *status.point;
  VectorXd stat = qp.hess * x + qp.lin;
  double res = 0.0;
  if (qp.ineq_lhs.rows() > 0) {
    stat += qp.ineq_lhs.transpose() * status.ineq_multipliers;
    const VectorXd slack = qp.ineq_lhs * x - qp.ineq_rhs;
    res = std::max(res, slack.maxCoeff());
    res = std::max(res, -status.ineq_multipliers.minCoeff());
    res = std::max(res, status.ineq_multipliers.cwiseProduct(slack).cwiseAbs().maxCoeff());
  }
  if (qp.eq_lhs.rows() > 0) {
    stat += qp.eq_lhs.transpose() * status.eq_multipliers;
    res = std::max(res, (qp.eq_lhs * x - qp.eq_rhs).cwiseAbs().maxCoeff());
  }
  if (stat.size() > 0) res = std::max(res, stat.cwiseAbs().maxCoeff());
  return res;
}

}  // namespace flatpi::numerics
