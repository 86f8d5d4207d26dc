#include "flatpi/error.hpp"
#include "flatpi/relu.hpp"
#include "flatpi/rng.hpp"

#include <cmath>

namespace flatpi::relu {
namespace {

std::vector<int> dependent_coords(const models::FlatModel& model) {
  std::vector<int> dims;
  const auto dep = model.input_dependence();
  for (int i = 0; i < static_cast<int>(dep.size()); ++i)
    if (dep[i]) dims.push_back(i);
  return dims;
}

}  // namespace

ReluNet train_net(const models::FlatModel& model, const TrainOptions& opts, TrainReport* report) {
  if (opts.n1 < 1) throw std::invalid_argument("train_net: n1 must be >= 1");
  if (opts.grid < 2) throw std::invalid_argument("train_net: grid must be >= 2");
  if (opts.epochs < 0) throw std::invalid_argument("train_net: epochs must be >= 0");

  const int n = model.n();
  const int n0 = n + 1;
  const models::Box& box = model.workspace();
  const std::vector<int> dims = dependent_coords(model);
  const int d = static_cast<int>(dims.size());
  const VectorXd center = 0.5 * (box.lo + box.hi);
  const VectorXd half = 0.5 * (box.hi - box.lo);

  long count = 1;
  for (int i = 0; i < d; ++i) count *= opts.grid;

  // Normalized inputs (d x count) and targets.
  MatrixXd S(d, count);
  VectorXd y(count);
  {
    VectorXd zeta = center;
    std::vector<int> idx(d, 0);
    for (long p = 0; p < count; ++p) {
      for (int i = 0; i < d; ++i) {
        const double s = -1.0 + 2.0 * idx[i] / (opts.grid - 1);
        S(i, p) = s;
        zeta[dims[i]] = center[dims[i]] + half[dims[i]] * s;
      }
      y[p] = model.flat_input(zeta.head(n), zeta[n]);
      for (int i = 0; i < d && ++idx[i] == opts.grid; ++i) idx[i] = 0;
    }
  }
  const double ymean = y.mean();
  double ystd = std::sqrt((y.array() - ymean).square().mean());
  if (!(ystd > 0.0)) ystd = 1.0;
  const VectorXd t = (y.array() - ymean) / ystd;

  // He-style initialization.
  Rng rng(opts.seed);
  const int n1 = opts.n1;
  MatrixXd W(n1, d);
  VectorXd b(n1), w(n1);
  double c = 0.0;
  for (int k = 0; k < n1; ++k)
    for (int i = 0; i < d; ++i) W(k, i) = rng.normal() * std::sqrt(2.0 / std::max(d, 1));
  for (int k = 0; k < n1; ++k) b[k] = rng.uniform(-0.5, 0.5);
  for (int k = 0; k < n1; ++k) w[k] = rng.normal() / std::sqrt(static_cast<double>(n1));

  MatrixXd vW = MatrixXd::Zero(n1, d);
  VectorXd vb = VectorXd::Zero(n1), vw = VectorXd::Zero(n1);
  double vc = 0.0;

  MatrixXd gW(n1, d);
  VectorXd gb(n1), gw(n1), a(n1), pre(n1);
  double loss = 0.0;
  const double inv_count = 1.0 / static_cast<double>(count);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    gW.setZero();
    gb.setZero();
    gw.setZero();
    double gc = 0.0;
    loss = 0.0;
    for (long p = 0; p < count; ++p) {
      pre = W * S.col(p) + b;
      a = pre.cwiseMax(0.0);
      const double r = w.dot(a) + c - t[p];
      loss += r * r;
      const double g = 2.0 * r * inv_count;
      gw += g * a;
      gc += g;
      for (int k = 0; k < n1; ++k) {
        if (pre[k] <= 0.0) continue;
        const double gk = g * w[k];
        gb[k] += gk;
        gW.row(k) += gk * S.col(p).transpose();
      }
    }
    loss *= inv_count;
    if (!std::isfinite(loss))
      throw Error(ErrorCode::NonFinite, "training loss diverged at epoch " + std::to_string(epoch) +
                                            "; reduce the learning rate");
    const double frac = static_cast<double>(epoch) / std::max(opts.epochs, 1);
    const double lr = opts.learning_rate * (frac < 0.6 ? 1.0 : frac < 0.85 ? 0.3 : 0.1);
    vW = opts.momentum * vW - lr * gW;
    vb = opts.momentum * vb - lr * gb;
    vw = opts.momentum * vw - lr * gw;
    vc = opts.momentum * vc - lr * gc;
    W += vW;
    b += vb;
    w += vw;
    c += vc;
  }

  // Undo the normalization: s_i = (zeta_i - center_i) / half_i, u = ystd * out + ymean.
  ReluNet net;
  net.W1 = MatrixXd::Zero(n1, n0);
  net.b1 = b;
  for (int i = 0; i < d; ++i) {
    net.W1.col(dims[i]) = W.col(i) / half[dims[i]];
    net.b1 -= W.col(i) * (center[dims[i]] / half[dims[i]]);
  }
  net.W2 = ystd * w;
  net.b2 = ystd * c + ymean;
  if (!net.W1.allFinite() || !net.b1.allFinite() || !net.W2.allFinite() || !std::isfinite(net.b2))
    throw Error(ErrorCode::NonFinite, "training produced non-finite weights");

  if (report) {
    double mse = 0.0;
    VectorXd zeta = center;
    for (long p = 0; p < count; ++p) {
      for (int i = 0; i < d; ++i) zeta[dims[i]] = center[dims[i]] + half[dims[i]] * S(i, p);
      const double r = eval_net(net, zeta) - y[p];
      mse += r * r;
    }
    report->mse = mse * inv_count;
    report->samples = static_cast<int>(count);
    report->epochs = opts.epochs;
  }
  return net;
}

}  // namespace flatpi::relu
