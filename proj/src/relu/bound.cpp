#include "flatpi/error.hpp"
#include "flatpi/parallel.hpp"
#include "flatpi/relu.hpp"

#include <cmath>
#include <sstream>

namespace flatpi::relu {

int default_error_grid(const models::FlatModel& model) {
  int d = 0;
  for (bool b : model.input_dependence()) d += b ? 1 : 0;
  return d <= 2 ? 201 : 101;
}

ApproxCert estimate_error_bound(const ReluNet& net, const models::FlatModel& model, int grid, double margin_factor,
                                int jobs) {
  if (grid < 2) throw std::invalid_argument("estimate_error_bound: grid must be >= 2");
  if (!(margin_factor >= 1.0)) throw std::invalid_argument("estimate_error_bound: margin_factor must be >= 1");
  const int n = model.n();
  if (net.n0() != n + 1) throw Error(ErrorCode::FormatError, "network input size does not match the model");

  // Grid every coordinate either side of the comparison can see.
  const auto dep = model.input_dependence();
  std::vector<int> dims;
  for (int i = 0; i <= n; ++i)
    if (dep[i] || net.W1.col(i).cwiseAbs().maxCoeff() > 0.0) dims.push_back(i);
  const int d = static_cast<int>(dims.size());

  const models::Box& box = model.workspace();
  const VectorXd center = 0.5 * (box.lo + box.hi);
  long total = 1;
  for (int i = 0; i < d; ++i) total *= grid;

  constexpr long kBlock = 4096;
  const long blocks = (total + kBlock - 1) / kBlock;
  std::vector<double> block_max(blocks, 0.0);
  parallel_for(blocks, jobs, [&](long blk) {
    const long begin = blk * kBlock, len = std::min(kBlock, total - begin);
    simd::PointBatch pts(n + 1, len);
    for (int i = 0; i <= n; ++i) pts.row(i).setConstant(center[i]);
    for (long q = 0; q < len; ++q) {
      long idx = begin + q;
      for (int i = 0; i < d; ++i) {
        const long k = idx % grid;
        idx /= grid;
        const int c = dims[i];
        pts(c, q) = box.lo[c] + (box.hi[c] - box.lo[c]) * static_cast<double>(k) / (grid - 1);
      }
    }
    const VectorXd approx = eval_net_batch(net, pts);
    double worst = 0.0;
    VectorXd z(n);
    for (long q = 0; q < len; ++q) {
      for (int i = 0; i < n; ++i) z[i] = pts(i, q);
      const double dev = std::abs(model.flat_input(z, pts(n, q)) - approx[q]);
      if (!std::isfinite(dev)) throw Error(ErrorCode::NonFinite, "non-finite deviation on the error grid");
      worst = std::max(worst, dev);
    }
    block_max[blk] = worst;
  });

  ApproxCert cert;
  for (double m : block_max) cert.max_deviation = std::max(cert.max_deviation, m);
  cert.margin_factor = margin_factor;
  cert.eps = margin_factor * cert.max_deviation;
  cert.grid_points_per_dim = grid;
  cert.workspace = box;
  if (cert.eps >= model.u_bound()) {
    std::ostringstream os;
    os << "approximation error " << cert.eps << " >= input bound " << model.u_bound();
    throw Error(ErrorCode::EpsilonTooLarge, os.str());
  }
  return cert;
}

}  // namespace flatpi::relu
