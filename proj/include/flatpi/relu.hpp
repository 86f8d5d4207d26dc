#pragma once

#include "flatpi/models.hpp"
#include "flatpi/simd.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flatpi::relu {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// u ~ W2 max(W1 zeta + b1, 0) + b2 with zeta = (z, v).
struct ReluNet {
  MatrixXd W1;  // n1 x n0
  VectorXd b1;  // n1
  VectorXd W2;  // n1 (the single output row)
  double b2 = 0.0;

  int n0() const { return static_cast<int>(W1.cols()); }
  int n1() const { return static_cast<int>(W1.rows()); }
  /// Throws FormatError on inconsistent shapes or non-finite entries.
  void validate() const;
};

double eval_net(const ReluNet& net, const VectorXd& zeta);

/// Forward pass over a batch of points (n0 x count), active SIMD backend.
VectorXd eval_net_batch(const ReluNet& net, const simd::PointBatch& pts);
VectorXd eval_net_batch(const ReluNet& net, const simd::PointBatch& pts, simd::Backend backend);

/// Sign pattern alpha_k = +1 if W1_k zeta + b1_k >= 0 else -1.
std::vector<int> activation_pattern(const ReluNet& net, const VectorXd& zeta);

struct TrainOptions {
  int n1 = 5;
  int grid = 21;  // points per dependent coordinate
  int epochs = 6000;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct TrainReport {
  double mse = 0.0;  // in the units of u
  int samples = 0;
  int epochs = 0;
};

/// Full-batch momentum gradient descent on a uniform grid over the workspace
/// coordinates flat_input depends on. Weights of the other coordinates stay
/// zero. Deterministic given the options. Throws NonFinite on divergence.
ReluNet train_net(const models::FlatModel& model, const TrainOptions& opts, TrainReport* report = nullptr);

struct ApproxCert {
  double eps = 0.0;
  double max_deviation = 0.0;
  int grid_points_per_dim = 0;
  models::Box workspace;
  double margin_factor = 1.0;
};

/// eps = margin_factor * max over a uniform grid of |flat_input - net|.
/// Throws EpsilonTooLarge when eps >= u_bound.
ApproxCert estimate_error_bound(const ReluNet& net, const models::FlatModel& model, int grid,
                                double margin_factor = 1.2, int jobs = 0);

/// Grid size used by default for a model (201 for 2 dependent coordinates,
/// 101 for 3 and more).
int default_error_grid(const models::FlatModel& model);

struct NetFile {
  ReluNet net;
  std::optional<ApproxCert> cert;
};

void save_net(const std::string& path, const ReluNet& net, const std::optional<ApproxCert>& cert);
std::string format_net(const ReluNet& net, const std::optional<ApproxCert>& cert);
/// Throws FormatError on any schema mismatch, including n0 != expected_n0.
NetFile load_net(const std::string& path, std::optional<int> expected_n0 = std::nullopt);
NetFile parse_net(const std::string& text, std::optional<int> expected_n0 = std::nullopt);

}  // namespace flatpi::relu
