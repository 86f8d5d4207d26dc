#include "flatpi/geometry.hpp"
#include "flatpi/numerics.hpp"
#include "flatpi/parallel.hpp"

namespace flatpi::geometry {
namespace {

// Is every point of f inside cell with slack >= delta on each row?
bool strictly_inside(const HPolytope& f, const HPolytope& cell, double delta) {
  for (int r = 0; r < cell.rows(); ++r) {
    const double nrm = cell.lhs.row(r).norm();
    if (nrm == 0.0) {
      if (cell.rhs[r] < delta) return false;
      continue;
    }
    numerics::LinearProgram lp{-cell.lhs.row(r).transpose(), f.lhs, f.rhs};
    const auto s = numerics::solve_lp(lp);
    if (!s.optimal()) return false;
    if (cell.lhs.row(r).dot(*s.point) > cell.rhs[r] - delta * nrm) return false;
  }
  return true;
}

}  // namespace

FacetSet collect_boundary_facets(const PolyUnion& u, const FacetOptions& opts) {
  struct Job {
    int cell, row;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(u.cells.size()); ++i)
    for (int j = 0; j < u.cells[i].rows(); ++j) {
      const auto& c = u.cells[i];
      if (opts.skip_activation_rows && c.kind(j) == RowKind::Activation) continue;
      if (c.lhs.row(j).norm() == 0.0) continue;
      jobs.push_back({i, j});
    }

  std::vector<std::optional<Facet>> slots(jobs.size());
  std::vector<char> dropped(jobs.size(), 0);
  parallel_for(static_cast<long>(jobs.size()), opts.jobs, [&](long t) {
    const auto [i, j] = jobs[t];
    const HPolytope& c = u.cells[i];
    Facet f;
    f.parent = i;
    f.row = j;
    f.poly.lhs = c.lhs;
    f.poly.rhs = c.rhs;
    f.poly.kinds = c.kinds;
    if (f.poly.kinds.empty()) f.poly.kinds.assign(c.rows(), RowKind::Generic);
    f.poly.pattern = c.pattern;
    f.poly.add_row(-c.lhs.row(j), -c.rhs[j], c.kind(j));
    numerics::LinearProgram lp{VectorXd::Zero(u.dim), f.poly.lhs, f.poly.rhs};
    const auto s = numerics::solve_lp(lp);
    if (!s.optimal()) return;
    f.poly.witness = *s.point;
    if (opts.prune) {
      for (int k = 0; k < static_cast<int>(u.cells.size()); ++k) {
        if (k == i) continue;
        if (strictly_inside(f.poly, u.cells[k], opts.prune_delta)) {
          dropped[t] = 1;
          return;
        }
      }
    }
    slots[t] = std::move(f);
  });

  FacetSet out;
  out.dim = u.dim;
  for (std::size_t t = 0; t < slots.size(); ++t) {
    if (dropped[t]) ++out.pruned;
    if (slots[t]) out.facets.push_back(std::move(*slots[t]));
  }
  return out;
}

}  // namespace flatpi::geometry
