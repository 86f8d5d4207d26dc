#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace flatpi::models {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned box.
struct Box {
  VectorXd lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const VectorXd& p, double tol = 0.0) const;
};

/// Single-input flat system with flat output z = (y, y', ..., y^(n-1)):
/// z' = A z + B v,  u = flat_input(z, v),  x = from_flat(z).
class FlatModel {
 public:
  virtual ~FlatModel() = default;

  virtual std::string name() const = 0;
  virtual int n() const = 0;

  virtual VectorXd f(const VectorXd& x) const = 0;
  virtual VectorXd g(const VectorXd& x) const = 0;
  /// f(x) + g(x) u.
  VectorXd eval_dynamics(const VectorXd& x, double u) const;

  virtual VectorXd to_flat(const VectorXd& x) const = 0;
  virtual VectorXd from_flat(const VectorXd& z) const = 0;
  virtual double flat_input(const VectorXd& z, double v) const = 0;
  /// Jacobian of x -> to_flat(x).
  virtual MatrixXd flat_state_jacobian(const VectorXd& x) const = 0;
  /// Flat coordinates of the equilibrium for reference r (shifts z1 only).
  virtual VectorXd flat_equilibrium(double r) const;

  virtual double u_bound() const = 0;
  /// Box over zeta = (z, v), dimension n + 1.
  const Box& workspace() const { return workspace_; }
  void set_workspace(Box b);
  /// Which coordinates of zeta flat_input actually depends on.
  virtual std::vector<bool> input_dependence() const = 0;

  /// Integrator chain realization.
  MatrixXd A() const;
  VectorXd B() const;

  /// Parameters as JSON (for bundles and reports).
  virtual nlohmann::json params() const = 0;

 protected:
  Box workspace_;
};

struct AircraftParams {
  double l0 = 2.5e5, l1 = 8.6e6, l3 = 4.35e7;
  double J = 4.5e6, d1 = 4.0, d2 = 42.0;
  double u_bar = 5e5;
};

class AircraftModel final : public FlatModel {
 public:
  explicit AircraftModel(AircraftParams p = {});
  std::string name() const override { return "aircraft"; }
  int n() const override { return 2; }
  VectorXd f(const VectorXd& x) const override;
  VectorXd g(const VectorXd& x) const override;
  VectorXd to_flat(const VectorXd& x) const override;
  VectorXd from_flat(const VectorXd& z) const override;
  double flat_input(const VectorXd& z, double v) const override;
  MatrixXd flat_state_jacobian(const VectorXd& x) const override;
  double u_bound() const override { return p_.u_bar; }
  std::vector<bool> input_dependence() const override { return {true, false, true}; }
  nlohmann::json params() const override;

  double lift(double a) const { return p_.l0 + p_.l1 * a + p_.l3 * a * a * a; }
  /// u_e = d1 l0 / d2.
  double trim_input() const { return p_.d1 * p_.l0 / p_.d2; }
  const AircraftParams& p() const { return p_; }

 private:
  AircraftParams p_;
};

struct QuadParams {
  double Gamma = 10.0, gamma = 0.3, tau = 0.2;
  double u_bar = 0.1745;
};

class Quad1dModel final : public FlatModel {
 public:
  explicit Quad1dModel(QuadParams p = {});
  std::string name() const override { return "quad1d"; }
  int n() const override { return 3; }
  VectorXd f(const VectorXd& x) const override;
  VectorXd g(const VectorXd& x) const override;
  VectorXd to_flat(const VectorXd& x) const override;
  VectorXd from_flat(const VectorXd& z) const override;
  double flat_input(const VectorXd& z, double v) const override;
  MatrixXd flat_state_jacobian(const VectorXd& x) const override;
  double u_bound() const override { return p_.u_bar; }
  std::vector<bool> input_dependence() const override { return {false, true, true, true}; }
  nlohmann::json params() const override;

  /// nu(z) = (z3 + gamma z2) / Gamma = sin x3.
  double nu(const VectorXd& z) const { return (z[2] + p_.gamma * z[1]) / p_.Gamma; }
  const QuadParams& p() const { return p_; }

 private:
  QuadParams p_;
};

/// Integrator chain with u = c'z + b v, identity state map. Used to exercise
/// the pipeline on a target the network can represent exactly.
class AffineModel final : public FlatModel {
 public:
  AffineModel(VectorXd c, double b, double u_bar, Box workspace);
  std::string name() const override { return "affine"; }
  int n() const override { return static_cast<int>(c_.size()); }
  VectorXd f(const VectorXd& x) const override;
  VectorXd g(const VectorXd& x) const override;
  VectorXd to_flat(const VectorXd& x) const override { return x; }
  VectorXd from_flat(const VectorXd& z) const override { return z; }
  double flat_input(const VectorXd& z, double v) const override { return c_.dot(z) + b_ * v; }
  MatrixXd flat_state_jacobian(const VectorXd& x) const override;
  double u_bound() const override { return u_bar_; }
  std::vector<bool> input_dependence() const override;
  nlohmann::json params() const override;

 private:
  VectorXd c_;
  double b_, u_bar_;
};

/// Built-in model by name ("aircraft", "quad1d") with optional parameter
/// overrides, e.g. {"u_bar": 0.2}. Unknown names or keys throw ConfigError.
std::unique_ptr<FlatModel> make_model(const std::string& name, const nlohmann::json& overrides = {});

Box default_workspace(const std::string& name);

}  // namespace flatpi::models
