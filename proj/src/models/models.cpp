#include "flatpi/models.hpp"

#include "flatpi/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flatpi::models {

bool Box::contains(const VectorXd& p, double tol) const {
  return ((p - hi).array() <= tol).all() && ((lo - p).array() <= tol).all();
}

VectorXd FlatModel::eval_dynamics(const VectorXd& x, double u) const {
  if (!x.allFinite() || !std::isfinite(u)) throw Error(ErrorCode::NonFinite, "non-finite state or input");
  return f(x) + g(x) * u;
}

VectorXd FlatModel::flat_equilibrium(double r) const {
  VectorXd z = VectorXd::Zero(n());
  z[0] = r;
  return z;
}

void FlatModel::set_workspace(Box b) {
  if (b.dim() != n() + 1 || b.hi.size() != b.lo.size() || ((b.hi - b.lo).array() <= 0.0).any())
    throw Error(ErrorCode::ConfigError, "workspace box must have n+1 coordinates with lo < hi");
  workspace_ = std::move(b);
}

MatrixXd FlatModel::A() const {
  const int k = n();
  MatrixXd a = MatrixXd::Zero(k, k);
  for (int i = 0; i + 1 < k; ++i) a(i, i + 1) = 1.0;
  return a;
}

VectorXd FlatModel::B() const {
  VectorXd b = VectorXd::Zero(n());
  b[n() - 1] = 1.0;
  return b;
}

// ---- aircraft

AircraftModel::AircraftModel(AircraftParams p) : p_(p) {
  for (double v : {p.l0, p.l1, p.l3, p.J, p.d1, p.d2, p.u_bar})
    if (!(v > 0.0)) throw Error(ErrorCode::ConfigError, "aircraft parameters must be positive");
  workspace_ = default_workspace("aircraft");
}

namespace {
void check_aoa(double a) {
  if (!(std::abs(a) < std::numbers::pi / 2))
    throw Error(ErrorCode::DomainError, "aircraft angle of attack outside (-pi/2, pi/2)");
}
}  // namespace

VectorXd AircraftModel::f(const VectorXd& x) const {
  check_aoa(x[0]);
  return Eigen::Vector2d(x[1], -p_.d1 * lift(x[0]) * std::cos(x[0]) / p_.J);
}

VectorXd AircraftModel::g(const VectorXd& x) const {
  check_aoa(x[0]);
  return Eigen::Vector2d(0.0, p_.d2 * std::cos(x[0]) / p_.J);
}

VectorXd AircraftModel::to_flat(const VectorXd& x) const {
  check_aoa(x[0]);
  return x;
}

VectorXd AircraftModel::from_flat(const VectorXd& z) const {
  check_aoa(z[0]);
  return z;
}

double AircraftModel::flat_input(const VectorXd& z, double v) const {
  const double c = std::cos(z[0]);
  if (!(c > 0.0) || !(std::abs(z[0]) < std::numbers::pi / 2))
    throw Error(ErrorCode::DomainError, "aircraft flat input undefined for cos z1 <= 0");
  return (v * p_.J / c + p_.d1 * lift(z[0])) / p_.d2;
}

MatrixXd AircraftModel::flat_state_jacobian(const VectorXd& x) const {
  check_aoa(x[0]);
  return MatrixXd::Identity(2, 2);
}

nlohmann::json AircraftModel::params() const {
  return {{"l0", p_.l0}, {"l1", p_.l1}, {"l3", p_.l3}, {"J", p_.J},
          {"d1", p_.d1}, {"d2", p_.d2}, {"u_bar", p_.u_bar}};
}

// ---- quad

Quad1dModel::Quad1dModel(QuadParams p) : p_(p) {
  if (!(p.Gamma > 0.0) || !(p.tau > 0.0) || !(p.gamma >= 0.0) || !(p.u_bar > 0.0))
    throw Error(ErrorCode::ConfigError, "quad parameters need Gamma>0, tau>0, gamma>=0, u_bar>0");
  workspace_ = default_workspace("quad1d");
}

VectorXd Quad1dModel::f(const VectorXd& x) const {
  return Eigen::Vector3d(x[1], p_.Gamma * std::sin(x[2]) - p_.gamma * x[1], -x[2] / p_.tau);
}

VectorXd Quad1dModel::g(const VectorXd&) const { return Eigen::Vector3d(0.0, 0.0, 1.0 / p_.tau); }

VectorXd Quad1dModel::to_flat(const VectorXd& x) const {
  return Eigen::Vector3d(x[0], x[1], p_.Gamma * std::sin(x[2]) - p_.gamma * x[1]);
}

VectorXd Quad1dModel::from_flat(const VectorXd& z) const {
  const double s = nu(z);
  if (!(std::abs(s) < 1.0)) throw Error(ErrorCode::DomainError, "quad |nu(z)| >= 1");
  return Eigen::Vector3d(z[0], z[1], std::asin(s));
}

double Quad1dModel::flat_input(const VectorXd& z, double v) const {
  const double s = nu(z);
  if (!(std::abs(s) < 1.0)) throw Error(ErrorCode::DomainError, "quad |nu(z)| >= 1");
  return p_.tau * (v + p_.gamma * z[2]) / (p_.Gamma * std::sqrt(1.0 - s * s)) + std::asin(s);
}

MatrixXd Quad1dModel::flat_state_jacobian(const VectorXd& x) const {
  MatrixXd j = MatrixXd::Identity(3, 3);
  j(2, 1) = -p_.gamma;
  j(2, 2) = p_.Gamma * std::cos(x[2]);
  return j;
}

nlohmann::json Quad1dModel::params() const {
  return {{"Gamma", p_.Gamma}, {"gamma", p_.gamma}, {"tau", p_.tau}, {"u_bar", p_.u_bar}};
}

// ---- affine

AffineModel::AffineModel(VectorXd c, double b, double u_bar, Box ws) : c_(std::move(c)), b_(b), u_bar_(u_bar) {
  set_workspace(std::move(ws));
}

VectorXd AffineModel::f(const VectorXd& x) const {
  VectorXd out = VectorXd::Zero(n());
  out.head(n() - 1) = x.tail(n() - 1);
  // chain closes through v = (u - c'x) / b
  out[n() - 1] = -c_.dot(x) / b_;
  return out;
}

VectorXd AffineModel::g(const VectorXd&) const {
  VectorXd out = VectorXd::Zero(n());
  out[n() - 1] = 1.0 / b_;
  return out;
}

MatrixXd AffineModel::flat_state_jacobian(const VectorXd&) const { return MatrixXd::Identity(n(), n()); }

std::vector<bool> AffineModel::input_dependence() const {
  std::vector<bool> dep(n() + 1);
  for (int i = 0; i < n(); ++i) dep[i] = c_[i] != 0.0;
  dep[n()] = b_ != 0.0;
  return dep;
}

nlohmann::json AffineModel::params() const {
  return {{"c", std::vector<double>(c_.data(), c_.data() + c_.size())}, {"b", b_}, {"u_bar", u_bar_}};
}

// ---- factory

Box default_workspace(const std::string& name) {
  Box b;
  if (name == "aircraft") {
    b.lo = Eigen::Vector3d(-0.3491, -1.0, -5.0);
    b.hi = Eigen::Vector3d(0.3491, 1.0, 5.0);
  } else if (name == "quad1d") {
    b.lo = Eigen::Vector4d(-12.0, -2.0, -3.0, -3.0);
    b.hi = Eigen::Vector4d(12.0, 2.0, 3.0, 3.0);
  } else {
    throw Error(ErrorCode::ConfigError, "unknown model '" + name + "'");
  }
  return b;
}

namespace {

void apply(const nlohmann::json& o, const char* key, double& dst, std::vector<std::string>& used) {
  if (o.contains(key)) {
    if (!o.at(key).is_number()) throw Error(ErrorCode::ConfigError, std::string("override '") + key + "' must be a number");
    dst = o.at(key).get<double>();
    used.emplace_back(key);
  }
}

void reject_unknown(const nlohmann::json& o, const std::vector<std::string>& used) {
  for (auto it = o.begin(); it != o.end(); ++it)
    if (std::find(used.begin(), used.end(), it.key()) == used.end())
      throw Error(ErrorCode::ConfigError, "unknown model parameter '" + it.key() + "'");
}

}  // namespace

std::unique_ptr<FlatModel> make_model(const std::string& name, const nlohmann::json& overrides) {
  const nlohmann::json o = overrides.is_null() ? nlohmann::json::object() : overrides;
  if (!o.is_object()) throw Error(ErrorCode::ConfigError, "model overrides must be an object");
  std::vector<std::string> used;
  if (name == "aircraft") {
    AircraftParams p;
    apply(o, "l0", p.l0, used);
    apply(o, "l1", p.l1, used);
    apply(o, "l3", p.l3, used);
    apply(o, "J", p.J, used);
    apply(o, "d1", p.d1, used);
    apply(o, "d2", p.d2, used);
    apply(o, "u_bar", p.u_bar, used);
    reject_unknown(o, used);
    return std::make_unique<AircraftModel>(p);
  }
  if (name == "quad1d") {
    QuadParams p;
    apply(o, "Gamma", p.Gamma, used);
    apply(o, "gamma", p.gamma, used);
    apply(o, "tau", p.tau, used);
    apply(o, "u_bar", p.u_bar, used);
    reject_unknown(o, used);
    return std::make_unique<Quad1dModel>(p);
  }
  throw Error(ErrorCode::ConfigError, "unknown model '" + name + "'");
}

}  // namespace flatpi::models
