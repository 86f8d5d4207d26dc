#pragma once

#include "flatpi/geometry.hpp"
#include "flatpi/models.hpp"
#include "flatpi/relu.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <optional>

namespace flatpi::invariance {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// V(z) = z'Pz decays at rate 2 kappa under v = K z.
struct GainCert {
  RowVectorXd K;
  MatrixXd P;
  MatrixXd Upsilon;  // P^-1
  double kappa = 0.0;
};

/// max eig of (A+BK)'P + P(A+BK) + 2 kappa P.
double gain_residual(const MatrixXd& A, const VectorXd& B, const GainCert& c);

/// Throws NotControllable when the stabilized Gramian is singular.
GainCert synth_gain(const MatrixXd& A, const VectorXd& B, double kappa);

/// {z : z'Pz <= eps}.
struct Ellipsoid {
  MatrixXd P;
  double eps_level = 0.0;
  bool contains(const VectorXd& z, double tol = 0.0) const { return z.dot(P * z) <= eps_level * (1.0 + tol); }
};

struct TerminalCert {
  RowVectorXd Kstar;
  MatrixXd M, Pstar, Q;
  double R = 1.0;
  double delta = 0.0;
  double eps_star = 0.0;  // set by terminal_level
};

/// Throws NotHurwitz when A + B K* is not Hurwitz.
TerminalCert synth_terminal(const MatrixXd& A, const VectorXd& B, const RowVectorXd& Kstar, const MatrixXd& Q,
                            double R, double delta);

/// max eig of (A+BK*)'P* + P*(A+BK*) + Q + K*'RK*.
double terminal_decrease_residual(const MatrixXd& A, const VectorXd& B, const TerminalCert& t);

struct Level {
  double eps = 0.0;
  VectorXd argmin;
  int facet = -1;
};

/// min over facets of min z'Pz on the facet. Ties go to the lowest facet.
/// Throws OriginOnBoundary when the level is <= 1e-10.
Level compute_level_enum(const MatrixXd& P, const geometry::FacetSet& facets, int jobs = 0);

struct MiqpOptions {
  double bigM = 0.0;  // <= 0 picks default_bigM
  long node_limit = 200000;
  /// Seed the incumbent with the enumeration optimum.
  bool warm_start = true;
  /// Compare against enumeration and throw BigMTooSmall on mismatch.
  bool self_check = true;
};

struct MiqpResult {
  double eps = 0.0;
  VectorXd argmin;
  long nodes = 0;
  double bigM = 0.0;
};

/// 10 * (max |theta| + max row norm * radius) over normalized facet rows.
double default_bigM(const geometry::FacetSet& facets, double radius);

/// Same level as compute_level_enum via a big-M mixed-binary program solved
/// by depth-first branch and bound on convex QP relaxations.
MiqpResult compute_level_miqp(const MatrixXd& P, const geometry::FacetSet& facets, const MiqpOptions& opts = {});

struct PiOptions {
  bool skip_activation_rows = true;
  bool prune = false;
  /// Rerun the level with pruning and report both values.
  bool refine = false;
  int jobs = 0;
};

struct PiResult {
  GainCert gain;
  geometry::PolyUnion vtilde;  // over (z, v)
  geometry::PolyUnion zk;      // over z
  geometry::FacetSet facets;
  Level level;
  std::optional<double> refined_eps;
  double volume = 0.0;
  Ellipsoid ellipsoid() const { return {gain.P, level.eps}; }
};

/// Workspace rows restricted to the coordinates the flat input depends on.
geometry::PolyUnion tightened_union(const models::FlatModel& model, const relu::ReluNet& net, double eps, int jobs = 0);

PiResult characterize_pi(const models::FlatModel& model, const relu::ReluNet& net, const relu::ApproxCert& cert,
                         double kappa, const PiOptions& opts = {});
/// Same from an already enumerated union.
PiResult characterize_pi(const models::FlatModel& model, const geometry::PolyUnion& vtilde, double kappa,
                         const PiOptions& opts = {});

/// Largest eps* with E(P*, eps*) inside Z_{K*}; stores it in t.
void terminal_level(TerminalCert& t, const geometry::PolyUnion& vtilde, const PiOptions& opts = {});

double ellipsoid_volume(const MatrixXd& P, double eps);

inline constexpr int kBundleSchema = 1;

struct Bundle {
  std::string model;
  nlohmann::json model_params;
  GainCert gain;
  double eps = 0.0;
  VectorXd argmin;
  int facet = -1;
  int cell_count = 0;
  int facet_count = 0;
  double volume = 0.0;
  double net_eps = 0.0;
  std::optional<double> refined_eps;
};

Bundle make_bundle(const models::FlatModel& model, const relu::ApproxCert& cert, const PiResult& r);
nlohmann::json to_json(const Bundle& b);
Bundle bundle_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TerminalCert& t);

}  // namespace flatpi::invariance
