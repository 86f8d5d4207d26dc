#include "flatpi/error.hpp"
#include "flatpi/relu.hpp"

namespace flatpi::relu {

void ReluNet::validate() const {
  if (n1() < 1 || n0() < 1) throw Error(ErrorCode::FormatError, "network needs n0, n1 >= 1");
  if (b1.size() != n1() || W2.size() != n1()) throw Error(ErrorCode::FormatError, "network shape mismatch");
  if (!W1.allFinite() || !b1.allFinite() || !W2.allFinite() || !std::isfinite(b2))
    throw Error(ErrorCode::FormatError, "network has non-finite entries");
}

double eval_net(const ReluNet& net, const VectorXd& zeta) {
  // Same operation order as the batch kernels.
  double out = 0.0;
  for (int k = 0; k < net.n1(); ++k) {
    double acc = net.b1[k];
    for (int j = 0; j < net.n0(); ++j) acc = acc + net.W1(k, j) * zeta[j];
    acc = acc > 0.0 ? acc : 0.0;
    out = out + net.W2[k] * acc;
  }
  return out + net.b2;
}

VectorXd eval_net_batch(const ReluNet& net, const simd::PointBatch& pts, simd::Backend backend) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> W1 = net.W1;
  VectorXd out(pts.cols());
  simd::kernels(backend).relu_forward(W1.data(), net.b1.data(), net.W2.data(), net.b2, net.n0(), net.n1(),
                                      pts.data(), pts.cols(), pts.cols(), out.data());
  return out;
}

VectorXd eval_net_batch(const ReluNet& net, const simd::PointBatch& pts) {
  return eval_net_batch(net, pts, simd::active_backend());
}

std::vector<int> activation_pattern(const ReluNet& net, const VectorXd& zeta) {
  std::vector<int> alpha(net.n1());
  for (int k = 0; k < net.n1(); ++k) {
    double acc = net.b1[k];
    for (int j = 0; j < net.n0(); ++j) acc = acc + net.W1(k, j) * zeta[j];
    alpha[k] = acc >= 0.0 ? 1 : -1;
  }
  return alpha;
}

}  // namespace flatpi::relu
