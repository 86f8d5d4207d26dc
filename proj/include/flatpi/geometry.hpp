#pragma once

#include "flatpi/models.hpp"
#include "flatpi/relu.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace flatpi::geometry {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Where a row came from. Facet collection may skip activation rows.
enum class RowKind { Activation, Band, Box, Generic };

/// {p : lhs p <= rhs}.
struct HPolytope {
  MatrixXd lhs;
  VectorXd rhs;
  std::vector<RowKind> kinds;  // one per row; empty means all Generic
  std::optional<std::vector<int>> pattern;
  // Filled by the nonemptiness test.
  std::optional<VectorXd> witness;
  double radius = 0.0;
  bool degenerate = false;

  int dim() const { return static_cast<int>(lhs.cols()); }
  int rows() const { return static_cast<int>(lhs.rows()); }
  RowKind kind(int row) const { return kinds.empty() ? RowKind::Generic : kinds[row]; }
  bool contains(const VectorXd& p, double tol = 1e-9) const;
  /// Appends one row.
  void add_row(const RowVectorXd& a, double b, RowKind k = RowKind::Generic);
};

struct PolyUnion {
  int dim = 0;
  std::vector<HPolytope> cells;

  bool contains(const VectorXd& p, double tol = 1e-9) const;
  /// Membership for a dims x count batch (active SIMD backend).
  std::vector<bool> contains_batch(const simd::PointBatch& pts, double tol = 1e-9) const;
};

struct Facet {
  int parent = 0;
  int row = 0;
  HPolytope poly;  // parent rows plus the tightened row as an equality pair

  RowVectorXd normal(const PolyUnion& u) const { return u.cells[parent].lhs.row(row); }
};

struct FacetSet {
  int dim = 0;
  std::vector<Facet> facets;
  int pruned = 0;
  int size() const { return static_cast<int>(facets.size()); }
};

struct Chebyshev {
  bool feasible = false;
  VectorXd center;  // valid iff feasible
  /// Inscribed radius. +inf when the polytope contains arbitrarily large
  /// balls; 0 (or a tiny value) for flat sets.
  double radius = 0.0;
};

Chebyshev chebyshev_center(const HPolytope& poly);

/// Full-dimensional if radius > this; nonempty but degenerate otherwise.
inline constexpr double kDegenerateRadius = 1e-8;

/// Runs the nonemptiness test and stores witness, radius and the
/// degenerate flag. Returns false when empty.
bool certify_nonempty(HPolytope& poly);

/// Psi(alpha) zeta + psi(alpha) is the network on the activation region of
/// alpha (+1 active, -1 inactive).
struct AffinePiece {
  RowVectorXd Psi;
  double psi = 0.0;
};
AffinePiece affine_piece(const relu::ReluNet& net, const std::vector<int>& alpha);

struct EnumerateOptions {
  /// Optional workspace box; rows are added only where box_coords is true
  /// (all coordinates when box_coords is empty).
  std::optional<models::Box> box;
  std::vector<bool> box_coords;
  int jobs = 0;
};

/// Union of activation regions intersected with |Psi zeta + psi| <= u_bar - eps
/// (and the box rows). Cells are ordered by pattern index, bit k of the index
/// set meaning neuron k active. Throws EmptyUnion when nothing survives.
PolyUnion enumerate_cells(const relu::ReluNet& net, double u_bar, double eps, const EnumerateOptions& opts = {});

/// alpha for a pattern index (bit k set means neuron k active).
std::vector<int> pattern_from_index(long index, int n1);

/// Z_K = {z : (z, K z) in union}. Throws EmptyUnion, or OriginExcluded when
/// the origin is not strictly inside some cell.
PolyUnion substitute_gain(const PolyUnion& u, const RowVectorXd& K, int jobs = 0);

/// Largest ball around p inside cell; negative when p is outside.
double interior_margin(const HPolytope& cell, const VectorXd& p);

struct FacetOptions {
  bool prune = false;
  double prune_delta = 1e-7;
  /// Skip rows tagged Activation. Valid for unions that are exactly a
  /// sublevel set of a continuous function (enumerate_cells output and its
  /// substitutions): boundary points of the union always sit on a band or
  /// box row of the cell containing them.
  bool skip_activation_rows = false;
  int jobs = 0;
};

FacetSet collect_boundary_facets(const PolyUnion& u, const FacetOptions& opts = {});

/// Radius of a centered ball containing the union (+inf if unbounded).
double bounding_radius(const PolyUnion& u);

nlohmann::json to_json(const HPolytope& p);
nlohmann::json to_json(const PolyUnion& u);
PolyUnion union_from_json(const nlohmann::json& j);

std::string_view to_string(RowKind k);

}  // namespace flatpi::geometry
