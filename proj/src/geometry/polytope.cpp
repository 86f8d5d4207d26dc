#include "flatpi/error.hpp"
#include "flatpi/geometry.hpp"
#include "flatpi/numerics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace flatpi::geometry {

bool HPolytope::contains(const VectorXd& p, double tol) const {
  if (p.size() != dim()) throw std::invalid_argument("HPolytope::contains: dimension mismatch");
  for (int i = 0; i < rows(); ++i)
    if (lhs.row(i).dot(p) > rhs[i] + tol) return false;
  return true;
}

void HPolytope::add_row(const RowVectorXd& a, double b, RowKind k) {
  if (kinds.empty() && rows() > 0) kinds.assign(rows(), RowKind::Generic);
  const int m = rows();
  const int d = m == 0 && lhs.cols() == 0 ? static_cast<int>(a.size()) : dim();
  lhs.conservativeResize(m + 1, d);
  rhs.conservativeResize(m + 1);
  lhs.row(m) = a;
  rhs[m] = b;
  kinds.push_back(k);
}

bool PolyUnion::contains(const VectorXd& p, double tol) const {
  if (p.size() != dim) throw std::invalid_argument("PolyUnion::contains: dimension mismatch");
  for (const auto& c : cells)
    if (c.contains(p, tol)) return true;
  return false;
}

std::vector<bool> PolyUnion::contains_batch(const simd::PointBatch& pts, double tol) const {
  if (pts.rows() != dim) throw std::invalid_argument("PolyUnion::contains_batch: dimension mismatch");
  const long count = pts.cols();
  std::vector<bool> in(count, false);
  VectorXd res(count);
  const auto& k = simd::kernels();
  for (const auto& c : cells) {
    if (c.rows() == 0) return std::vector<bool>(count, true);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> H = c.lhs;
    k.max_row_residual(H.data(), c.rhs.data(), c.rows(), dim, pts.data(), count, count, res.data());
    for (long p = 0; p < count; ++p)
      if (res[p] <= tol) in[p] = true;
  }
  return in;
}

Chebyshev chebyshev_center(const HPolytope& poly) {
  if (poly.rows() < 1) throw std::invalid_argument("chebyshev_center: polytope needs at least one row");
  const int d = poly.dim();
  // max r  s.t.  a_i x + |a_i| r <= b_i
  numerics::LinearProgram lp;
  lp.cost = VectorXd::Zero(d + 1);
  lp.cost[d] = -1.0;
  lp.ineq_lhs.resize(poly.rows(), d + 1);
  lp.ineq_lhs.leftCols(d) = poly.lhs;
  for (int i = 0; i < poly.rows(); ++i) lp.ineq_lhs(i, d) = poly.lhs.row(i).norm();
  lp.ineq_rhs = poly.rhs;

  Chebyshev out;
  const auto s = numerics::solve_lp(lp);
  if (s.kind == numerics::SolveKind::Unbounded) {
    numerics::LinearProgram feas{VectorXd::Zero(d), poly.lhs, poly.rhs};
    const auto f = numerics::solve_lp(feas);
    if (!f.optimal()) return out;
    out.feasible = true;
    out.center = *f.point;
    out.radius = std::numeric_limits<double>::infinity();
    return out;
  }
  if (!s.optimal()) return out;
  const double r = (*s.point)[d];
  // Slightly negative radii come from roundoff on flat sets.
  if (r < -1e-10) return out;
  out.feasible = true;
  out.center = s.point->head(d);
  out.radius = std::max(r, 0.0);
  return out;
}

bool certify_nonempty(HPolytope& poly) {
  const Chebyshev c = chebyshev_center(poly);
  if (!c.feasible) {
    poly.witness.reset();
    poly.radius = 0.0;
    return false;
  }
  poly.witness = c.center;
  poly.radius = c.radius;
  poly.degenerate = c.radius <= kDegenerateRadius;
  return true;
}

double interior_margin(const HPolytope& cell, const VectorXd& p) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cell.rows(); ++i) {
    const double nrm = cell.lhs.row(i).norm();
    const double slack = cell.rhs[i] - cell.lhs.row(i).dot(p);
    if (nrm == 0.0) {
      if (slack < 0.0) return -std::numeric_limits<double>::infinity();
      continue;
    }
    m = std::min(m, slack / nrm);
  }
  return m;
}

double bounding_radius(const PolyUnion& u) {
  double r = 0.0;
  for (const auto& c : u.cells) {
    for (int j = 0; j < u.dim; ++j)
      for (double sgn : {1.0, -1.0}) {
        numerics::LinearProgram lp{VectorXd::Zero(u.dim), c.lhs, c.rhs};
        lp.cost[j] = -sgn;
        const auto s = numerics::solve_lp(lp);
        if (s.kind == numerics::SolveKind::Unbounded) return std::numeric_limits<double>::infinity();
        if (s.optimal()) r = std::max(r, std::abs((*s.point)[j]));
      }
  }
  // box corner distance
  return r * std::sqrt(static_cast<double>(u.dim));
}

std::string_view to_string(RowKind k) {
  switch (k) {
    case RowKind::Activation: return "activation";
    case RowKind::Band: return "band";
    case RowKind::Box: return "box";
    case RowKind::Generic: return "generic";
  }
  return "generic";
}

namespace {

RowKind kind_from_string(const std::string& s) {
  if (s == "activation") return RowKind::Activation;
  if (s == "band") return RowKind::Band;
  if (s == "box") return RowKind::Box;
  if (s == "generic") return RowKind::Generic;
  throw Error(ErrorCode::FormatError, "unknown row kind '" + s + "'");
}

std::vector<double> to_vec(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

nlohmann::json to_json(const HPolytope& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < p.rows(); ++i) {
    rows.push_back({{"a", to_vec(p.lhs.row(i).transpose())}, {"b", p.rhs[i]}, {"kind", to_string(p.kind(i))}});
  }
  nlohmann::json j = {{"rows", rows}, {"radius", p.radius}, {"degenerate", p.degenerate}};
  if (p.pattern) j["pattern"] = *p.pattern;
  if (p.witness) j["witness"] = to_vec(*p.witness);
  return j;
}

nlohmann::json to_json(const PolyUnion& u) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : u.cells) cells.push_back(to_json(c));
  return {{"dim", u.dim}, {"cells", cells}};
}

PolyUnion union_from_json(const nlohmann::json& j) {
  try {
    PolyUnion u;
    u.dim = j.at("dim").get<int>();
    if (u.dim < 1) throw Error(ErrorCode::FormatError, "union dim must be positive");
    for (const auto& jc : j.at("cells")) {
      HPolytope c;
      c.lhs.resize(0, u.dim);
      for (const auto& row : jc.at("rows")) {
        const auto a = row.at("a").get<std::vector<double>>();
        if (static_cast<int>(a.size()) != u.dim) throw Error(ErrorCode::FormatError, "row length != dim");
        c.add_row(Eigen::Map<const RowVectorXd>(a.data(), u.dim), row.at("b").get<double>(),
                  kind_from_string(row.at("kind").get<std::string>()));
      }
      if (jc.contains("pattern")) c.pattern = jc["pattern"].get<std::vector<int>>();
      if (jc.contains("witness")) {
        const auto w = jc["witness"].get<std::vector<double>>();
        if (static_cast<int>(w.size()) != u.dim) throw Error(ErrorCode::FormatError, "witness length != dim");
        c.witness = Eigen::Map<const VectorXd>(w.data(), u.dim);
      }
      c.radius = jc.value("radius", 0.0);
      c.degenerate = jc.value("degenerate", false);
      u.cells.push_back(std::move(c));
    }
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("union: ") + e.what());
  }
}

}  // namespace flatpi::geometry
