#include "flatpi/error.hpp"
#include "flatpi/geometry.hpp"
#include "flatpi/parallel.hpp"

#include <stdexcept>

namespace flatpi::geometry {

std::vector<int> pattern_from_index(long index, int n1) {
  std::vector<int> a(n1);
  for (int k = 0; k < n1; ++k) a[k] = (index >> k) & 1 ? 1 : -1;
  return a;
}

AffinePiece affine_piece(const relu::ReluNet& net, const std::vector<int>& alpha) {
  if (static_cast<int>(alpha.size()) != net.n1()) throw std::invalid_argument("affine_piece: pattern length");
  AffinePiece p{RowVectorXd::Zero(net.n0()), net.b2};
  for (int k = 0; k < net.n1(); ++k) {
    const double on = 0.5 * (alpha[k] + 1);
    p.Psi += on * net.W2[k] * net.W1.row(k);
    p.psi += on * net.W2[k] * net.b1[k];
  }
  return p;
}

PolyUnion enumerate_cells(const relu::ReluNet& net, double u_bar, double eps, const EnumerateOptions& opts) {
  net.validate();
  if (!(eps < u_bar)) throw Error(ErrorCode::EpsilonTooLarge, "eps must be below u_bar");
  if (net.n1() > 24) throw std::invalid_argument("enumerate_cells: n1 > 24 exceeds the enumeration budget");
  const int d = net.n0();
  if (opts.box && opts.box->dim() != d) throw std::invalid_argument("enumerate_cells: box dimension mismatch");
  if (!opts.box_coords.empty() && static_cast<int>(opts.box_coords.size()) != d)
    throw std::invalid_argument("enumerate_cells: box_coords size mismatch");

  const double level = u_bar - eps;
  const long count = 1L << net.n1();
  std::vector<std::optional<HPolytope>> slots(count);

  parallel_for(count, opts.jobs, [&](long idx) {
    const auto alpha = pattern_from_index(idx, net.n1());
    HPolytope c;
    c.lhs.resize(0, d);
    for (int k = 0; k < net.n1(); ++k)
      c.add_row(-alpha[k] * net.W1.row(k), alpha[k] * net.b1[k], RowKind::Activation);
    const AffinePiece p = affine_piece(net, alpha);
    c.add_row(p.Psi, level - p.psi, RowKind::Band);
    c.add_row(-p.Psi, level + p.psi, RowKind::Band);
    if (opts.box) {
      for (int i = 0; i < d; ++i) {
        if (!opts.box_coords.empty() && !opts.box_coords[i]) continue;
        RowVectorXd e = RowVectorXd::Zero(d);
        e[i] = 1.0;
        c.add_row(e, opts.box->hi[i], RowKind::Box);
        c.add_row(-e, -opts.box->lo[i], RowKind::Box);
      }
    }
    c.pattern = alpha;
    if (certify_nonempty(c)) slots[idx] = std::move(c);
  });

  PolyUnion u;
  u.dim = d;
  for (auto& s : slots)
    if (s) u.cells.push_back(std::move(*s));
  if (u.cells.empty()) throw Error(ErrorCode::EmptyUnion, "no activation cell meets the tightened input bound");
  return u;
}

PolyUnion substitute_gain(const PolyUnion& u, const RowVectorXd& K, int jobs) {
  const int n = static_cast<int>(K.size());
  if (u.dim != n + 1) throw std::invalid_argument("substitute_gain: union dimension must be K size + 1");
  std::vector<std::optional<HPolytope>> slots(u.cells.size());
  parallel_for(static_cast<long>(u.cells.size()), jobs, [&](long i) {
    const HPolytope& src = u.cells[i];
    HPolytope c;
    c.lhs = src.lhs.leftCols(n) + src.lhs.col(n) * K;
    c.rhs = src.rhs;
    c.kinds = src.kinds;
    c.pattern = src.pattern;
    if (certify_nonempty(c)) slots[i] = std::move(c);
  });
  PolyUnion out;
  out.dim = n;
  for (auto& s : slots)
    if (s) out.cells.push_back(std::move(*s));
  if (out.cells.empty()) throw Error(ErrorCode::EmptyUnion, "Z_K is empty for this gain");
  const VectorXd origin = VectorXd::Zero(n);
  bool inside = false;
  for (const auto& c : out.cells)
    if (interior_margin(c, origin) > kDegenerateRadius) inside = true;
  if (!inside) throw Error(ErrorCode::OriginExcluded, "origin is not strictly inside Z_K");
  return out;
}

}  // namespace flatpi::geometry
