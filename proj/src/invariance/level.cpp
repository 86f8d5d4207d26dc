#include "flatpi/error.hpp"
#include "flatpi/invariance.hpp"
#include "flatpi/numerics.hpp"
#include "flatpi/parallel.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace flatpi::invariance {
namespace {

// Facet rows with the tightened row split out as an equality.
struct FacetRows {
  MatrixXd G;  // inequalities, unit rows
  VectorXd g;
  RowVectorXd a;  // equality, unit row
  double theta = 0.0;
};

FacetRows facet_rows(const geometry::Facet& f) {
  const auto& p = f.poly;
  const int last = p.rows() - 1;  // negated copy of the tightened row
  FacetRows r;
  r.G.resize(p.rows() - 2, p.dim());
  r.g.resize(p.rows() - 2);
  int k = 0;
  for (int i = 0; i < p.rows(); ++i) {
    if (i == f.row || i == last) continue;
    const double nrm = p.lhs.row(i).norm();
    const double s = nrm > 0.0 ? 1.0 / nrm : 1.0;
    r.G.row(k) = s * p.lhs.row(i);
    r.g[k++] = s * p.rhs[i];
  }
  const double nrm = p.lhs.row(f.row).norm();
  r.a = p.lhs.row(f.row) / nrm;
  r.theta = p.rhs[f.row] / nrm;
  return r;
}

numerics::QuadraticProgram facet_qp(const MatrixXd& P, const FacetRows& r) {
  numerics::QuadraticProgram qp;
  const int d = static_cast<int>(P.rows());
  qp.hess = 2.0 * P;
  qp.lin = VectorXd::Zero(d);
  qp.ineq_lhs = r.G;
  qp.ineq_rhs = r.g;
  qp.eq_lhs = r.a;
  qp.eq_rhs = VectorXd::Constant(1, r.theta);
  return qp;
}

}  // namespace

Level compute_level_enum(const MatrixXd& P, const geometry::FacetSet& facets, int jobs) {
  if (facets.facets.empty()) throw std::invalid_argument("compute_level_enum: no facets");
  if (P.rows() != facets.dim) throw std::invalid_argument("compute_level_enum: dimension mismatch");
  const long nb = facets.size();
  std::vector<double> val(nb, std::numeric_limits<double>::infinity());
  std::vector<VectorXd> arg(nb);
  parallel_for(nb, jobs, [&](long j) {
    const auto s = numerics::solve_qp(facet_qp(P, facet_rows(facets.facets[j])));
    if (!s.optimal()) return;  // numerically empty facet
    arg[j] = *s.point;
    val[j] = arg[j].dot(P * arg[j]);
  });
  Level out;
  out.eps = std::numeric_limits<double>::infinity();
  for (long j = 0; j < nb; ++j)
    if (val[j] < out.eps) {
      out.eps = val[j];
      out.argmin = arg[j];
      out.facet = static_cast<int>(j);
    }
  if (out.facet < 0) throw Error(ErrorCode::EmptyUnion, "no facet QP was solvable");
  if (out.eps <= 1e-10) throw Error(ErrorCode::OriginOnBoundary, "origin lies on the boundary of Z_K");
  return out;
}

double default_bigM(const geometry::FacetSet& facets, double radius) {
  double theta = 0.0;
  for (const auto& f : facets.facets) {
    const FacetRows r = facet_rows(f);
    theta = std::max(theta, std::abs(r.theta));
    if (r.g.size() > 0) theta = std::max(theta, r.g.cwiseAbs().maxCoeff());
  }
  // rows are unit norm
  return 10.0 * (theta + radius);
}

MiqpResult compute_level_miqp(const MatrixXd& P, const geometry::FacetSet& facets, const MiqpOptions& opts) {
  if (facets.facets.empty()) throw std::invalid_argument("compute_level_miqp: no facets");
  const int d = facets.dim;
  const int nb = facets.size();

  std::vector<FacetRows> rows;
  rows.reserve(nb);
  for (const auto& f : facets.facets) rows.push_back(facet_rows(f));

  MiqpResult res;
  if (opts.bigM > 0.0) {
    res.bigM = opts.bigM;
  } else {
    geometry::PolyUnion hull{d, {}};
    for (const auto& f : facets.facets) hull.cells.push_back(f.poly);
    res.bigM = default_bigM(facets, geometry::bounding_radius(hull));
    if (!std::isfinite(res.bigM)) throw Error(ErrorCode::BigMTooSmall, "facets are unbounded; pass bigM explicitly");
  }
  const double M = res.bigM;

  std::optional<Level> reference;
  if (opts.warm_start || opts.self_check) reference = compute_level_enum(P, facets);

  double incumbent = std::numeric_limits<double>::infinity();
  VectorXd best;
  if (opts.warm_start) {
    incumbent = reference->eps;
    best = reference->argmin;
  }

  // fix[j]: -1 free, 0 facet j enforced, 1 facet j relaxed
  std::vector<std::vector<signed char>> stack{std::vector<signed char>(nb, -1)};
  while (!stack.empty()) {
    const std::vector<signed char> fix = std::move(stack.back());
    stack.pop_back();
    if (++res.nodes > opts.node_limit) throw Error(ErrorCode::NodeBudget, "branch and bound exceeded the node limit");

    int ones = 0, zeros = 0;
    std::vector<int> freev;
    for (int j = 0; j < nb; ++j) {
      if (fix[j] == 1) ++ones;
      else if (fix[j] == 0) ++zeros;
      else freev.push_back(j);
    }
    if (ones > nb - 1 || zeros > 1) continue;
    const int nf = static_cast<int>(freev.size());
    std::vector<int> col(nb, -1);
    for (int k = 0; k < nf; ++k) col[freev[k]] = d + k;

    // rows: each facet's inequalities and its equality pair, relaxed by M delta_j
    long m = 2 * nf;
    for (int j = 0; j < nb; ++j) m += rows[j].G.rows() + 2;
    numerics::QuadraticProgram qp;
    qp.hess = MatrixXd::Zero(d + nf, d + nf);
    qp.hess.topLeftCorner(d, d) = 2.0 * P;
    qp.lin = VectorXd::Zero(d + nf);
    qp.ineq_lhs = MatrixXd::Zero(m, d + nf);
    qp.ineq_rhs = VectorXd::Zero(m);
    long r = 0;
    auto put = [&](const RowVectorXd& a, double b, int j) {
      qp.ineq_lhs.block(r, 0, 1, d) = a;
      if (fix[j] == 1) b += M;
      else if (fix[j] == -1) qp.ineq_lhs(r, col[j]) = -M;
      qp.ineq_rhs[r++] = b;
    };
    for (int j = 0; j < nb; ++j) {
      for (int i = 0; i < rows[j].G.rows(); ++i) put(rows[j].G.row(i), rows[j].g[i], j);
      put(rows[j].a, rows[j].theta, j);
      put(-rows[j].a, -rows[j].theta, j);
    }
    for (int k = 0; k < nf; ++k) {
      qp.ineq_lhs(r, d + k) = 1.0;
      qp.ineq_rhs[r++] = 1.0;
      qp.ineq_lhs(r, d + k) = -1.0;
      qp.ineq_rhs[r++] = 0.0;
    }
    qp.eq_lhs = MatrixXd::Zero(nf > 0 ? 1 : 0, d + nf);
    qp.eq_rhs = VectorXd::Zero(nf > 0 ? 1 : 0);
    if (nf > 0) {
      qp.eq_lhs.rightCols(nf).setOnes();
      qp.eq_rhs[0] = (nb - 1) - ones;
    } else if (ones != nb - 1) {
      continue;
    }

    const auto s = numerics::solve_qp(qp);
    if (s.kind == numerics::SolveKind::Infeasible) continue;
    if (!s.optimal()) throw Error(ErrorCode::NodeBudget, "relaxation QP did not converge");
    const VectorXd& x = *s.point;
    const double bound = x.head(d).dot(P * x.head(d));
    if (bound >= incumbent - 1e-9 * std::max(1.0, incumbent)) continue;

    int branch = -1;
    double frac = 1e-6;
    for (int k = 0; k < nf; ++k) {
      const double f = std::min(x[d + k], 1.0 - x[d + k]);
      if (f > frac) {
        frac = f;
        branch = freev[k];
      }
    }
    if (branch < 0) {
      incumbent = bound;
      best = x.head(d);
      continue;
    }
    auto up = fix, down = fix;
    up[branch] = 1;
    down[branch] = 0;
    stack.push_back(std::move(up));
    stack.push_back(std::move(down));
  }

  if (!std::isfinite(incumbent)) throw Error(ErrorCode::BigMTooSmall, "mixed-binary program found no feasible point");
  res.eps = incumbent;
  res.argmin = best;
  if (opts.self_check && std::abs(res.eps - reference->eps) > 1e-4 * std::max(1.0, reference->eps))
    throw Error(ErrorCode::BigMTooSmall, "big-M level " + std::to_string(res.eps) + " differs from enumeration " +
                                             std::to_string(reference->eps));
  return res;
}

}  // namespace flatpi::invariance
