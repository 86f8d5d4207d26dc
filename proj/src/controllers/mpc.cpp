#include "flatpi/controllers.hpp"
#include "flatpi/error.hpp"
#include "flatpi/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flatpi::controllers {

void zoh(const MatrixXd& A, const VectorXd& B, double h, MatrixXd& Ad, VectorXd& Bd) {
  const int n = static_cast<int>(A.rows());
  // e^{Ah} = sum_j (Ah)^j / j!, finite for nilpotent A
  MatrixXd term = MatrixXd::Identity(n, n);
  Ad = MatrixXd::Zero(n, n);
  MatrixXd S = MatrixXd::Zero(n, n);  // sum_j A^j h^{j+1} / (j+1)!
  for (int j = 0; j <= n; ++j) {
    Ad += term;
    S += term * (h / (j + 1));
    term = (term * A * h / (j + 1)).eval();
  }
  if (term.cwiseAbs().maxCoeff() != 0.0) throw std::invalid_argument("zoh: A must be nilpotent");
  Bd = S * B;
}

namespace {

// The plant sees u = phi_u(z, v) sampled by the integrator, so the flat state
// drifts from the prediction by O(1e-5) per replan; predicted rows (k >= 1)
// and the terminal level keep a margin larger than that.
constexpr double kTermMargin = 1e-4;
constexpr double kRowMargin = 1e-4;
// relative optimality gap of the branch and bound
constexpr double kGap = 1e-6;

struct Problem {
  int N = 0, n = 0;
  double h = 0.0;
  std::vector<MatrixXd> Phi;  // z_k = Phi_k z0 + Gam_k v
  std::vector<MatrixXd> Gam;
  MatrixXd H;  // cost Hessian
  VectorXd f;  // cost gradient at v = 0
  double c0 = 0.0;
  MatrixXd T;  // terminal quadratic: g(v) = v'Tv + 2 t1'v + tc - eps*
  VectorXd t1;
  double tc = 0.0;
  double eps_star = 0.0;
  // box rows shared by every cell, over zeta = (z, v)
  MatrixXd box_lhs;
  VectorXd box_rhs;

  double cost(const VectorXd& v) const { return 0.5 * v.dot(H * v) + f.dot(v) + c0; }
  double terminal(const VectorXd& v) const { return v.dot(T * v) + 2.0 * t1.dot(v) + tc - eps_star; }
  double terminal_tight(const VectorXd& v) const { return terminal(v) + kTermMargin * std::max(1.0, eps_star); }
  VectorXd zeta(const VectorXd& z0, const VectorXd& v, int k) const {
    VectorXd out(n + 1);
    out << Phi[k] * z0 + Gam[k] * v, v[k];
    return out;
  }
  // (z_{k+1}, v_k): where the held input ends up before the next sample
  VectorXd zeta_end(const VectorXd& z0, const VectorXd& v, int k) const {
    VectorXd out(n + 1);
    out << Phi[k + 1] * z0 + Gam[k + 1] * v, v[k];
    return out;
  }
};

// Step k is admissible when one cell holds both ends of the interval; the
// cells are convex and z_n moves linearly under a held v, so this tracks the
// continuous-time constraint far better than the sample alone.
bool step_ok(const geometry::PolyUnion& u, const Problem& p, const VectorXd& z0, const VectorXd& v, int k) {
  const VectorXd a = p.zeta(z0, v, k), b = p.zeta_end(z0, v, k);
  for (const auto& c : u.cells)
    if (c.contains(a) && c.contains(b)) return true;
  return false;
}

double step_margin(const geometry::HPolytope& c, const Problem& p, const VectorXd& z0, const VectorXd& v, int k) {
  return std::min(geometry::interior_margin(c, p.zeta(z0, v, k)), geometry::interior_margin(c, p.zeta_end(z0, v, k)));
}

Problem build(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0) {
  Problem p;
  p.N = cfg.steps;
  p.n = model.n();
  p.h = cfg.dt();
  MatrixXd Ad;
  VectorXd Bd;
  zoh(model.A(), model.B(), p.h, Ad, Bd);
  p.Phi.resize(p.N + 1);
  p.Gam.resize(p.N + 1);
  p.Phi[0] = MatrixXd::Identity(p.n, p.n);
  p.Gam[0] = MatrixXd::Zero(p.n, p.N);
  for (int k = 0; k < p.N; ++k) {
    p.Phi[k + 1] = Ad * p.Phi[k];
    p.Gam[k + 1] = Ad * p.Gam[k];
    p.Gam[k + 1].col(k) += Bd;
  }
  const auto& t = cfg.terminal;
  p.H = 2.0 * p.h * t.R * MatrixXd::Identity(p.N, p.N);
  p.f = VectorXd::Zero(p.N);
  for (int k = 0; k < p.N; ++k) {
    const VectorXd zf = p.Phi[k] * z0;
    p.H += 2.0 * p.h * p.Gam[k].transpose() * t.Q * p.Gam[k];
    p.f += 2.0 * p.h * p.Gam[k].transpose() * (t.Q * zf);
    p.c0 += p.h * zf.dot(t.Q * zf);
  }
  const VectorXd zN = p.Phi[p.N] * z0;
  p.T = p.Gam[p.N].transpose() * t.Pstar * p.Gam[p.N];
  p.T = 0.5 * (p.T + p.T.transpose()).eval();
  p.t1 = p.Gam[p.N].transpose() * (t.Pstar * zN);
  p.tc = zN.dot(t.Pstar * zN);
  p.H += 2.0 * p.T;
  p.f += 2.0 * p.t1;
  p.c0 += p.tc;
  p.H = 0.5 * (p.H + p.H.transpose()).eval();
  p.eps_star = t.eps_star;

  p.box_lhs.resize(0, p.n + 1);
  if (!cfg.vtilde.cells.empty()) {
    const auto& c = cfg.vtilde.cells.front();
    for (int i = 0; i < c.rows(); ++i)
      if (c.kind(i) == geometry::RowKind::Box) {
        p.box_lhs.conservativeResize(p.box_lhs.rows() + 1, Eigen::NoChange);
        p.box_rhs.conservativeResize(p.box_lhs.rows());
        p.box_lhs.row(p.box_lhs.rows() - 1) = c.lhs.row(i);
        p.box_rhs[p.box_lhs.rows() - 1] = c.rhs[i];
      }
  }
  return p;
}

struct NodeResult {
  bool feasible = false;
  double bound = 0.0;  // lower bound on the node optimum
  double cost = 0.0;   // cost of v
  VectorXd v;          // meets the terminal constraint
};

class NodeSolver {
 public:
  NodeSolver(const Problem& p, const geometry::PolyUnion& u, const VectorXd& z0) : p_(p), u_(u), z0_(z0) {}

  // `cutoff`: incumbent cost; the node is abandoned as soon as its bound
  // reaches it (reported as not feasible).
  NodeResult solve(const std::vector<int>& fix, double cutoff = std::numeric_limits<double>::infinity()) const {
    numerics::QuadraticProgram qp;
    qp.eq_lhs.resize(0, p_.N);
    qp.eq_rhs.resize(0);
    // rows free of v at the interval end repeat the next sample's rows when
    // both steps share a constraint set; they are skipped (degenerate)
    auto keep = [&](int k, int j, const MatrixXd& L, int i) {
      return !(j == k + 1 && k + 1 < p_.N && fix[k + 1] == fix[k] && L(i, p_.n) == 0.0);
    };
    auto rows_of = [&](int k) -> const MatrixXd& { return fix[k] >= 0 ? u_.cells[fix[k]].lhs : p_.box_lhs; };
    long m = 0;
    for (int k = 0; k < p_.N; ++k) {
      const MatrixXd& L = rows_of(k);
      for (int j = k; j <= k + 1; ++j)
        for (int i = 0; i < L.rows(); ++i) m += keep(k, j, L, i);
    }
    qp.ineq_lhs.resize(m, p_.N);
    qp.ineq_rhs.resize(m);
    m = 0;
    for (int k = 0; k < p_.N; ++k) {
      const MatrixXd& L = rows_of(k);
      const VectorXd& r = fix[k] >= 0 ? u_.cells[fix[k]].rhs : p_.box_rhs;
      for (int j = k; j <= k + 1; ++j) {
        const VectorXd zf = p_.Phi[j] * z0_;
        for (int i = 0; i < L.rows(); ++i) {
          if (!keep(k, j, L, i)) continue;
          const auto a = L.row(i).head(p_.n);
          qp.ineq_lhs.row(m) = a * p_.Gam[j];
          qp.ineq_lhs(m, k) += L(i, p_.n);
          qp.ineq_rhs[m] = r[i] - a.dot(zf) - (j > 0 ? kRowMargin * L.row(i).norm() : 0.0);
          ++m;
        }
      }
    }

    NodeResult out;
    auto run = [&](double mu, const std::optional<VectorXd>& warm) {
      qp.hess = p_.H + 2.0 * mu * p_.T;
      qp.lin = p_.f + 2.0 * mu * p_.t1;
      numerics::QpOptions o;
      o.warm_start = warm;
      return numerics::solve_qp(qp, o);
    };
    const auto s0 = run(0.0, std::nullopt);
    if (s0.kind == numerics::SolveKind::Infeasible) return out;
    if (!s0.optimal()) throw Error(ErrorCode::NodeBudget, "MPC relaxation did not converge");
    VectorXd v0 = *s0.point;
    const double gap = kGap * std::max(1.0, std::abs(cutoff));
    if (p_.cost(v0) >= cutoff - gap) return out;
    if (p_.terminal_tight(v0) <= 0.0) {
      out.feasible = true;
      out.v = v0;
      out.cost = out.bound = p_.cost(v0);
      return out;
    }

    // Is the terminal set reachable inside this node at all? (with an
    // incumbent the growing dual bound settles this on its own)
    if (!std::isfinite(cutoff)) {
      numerics::QuadraticProgram tq = qp;
      tq.hess = 2.0 * p_.T + 1e-12 * MatrixXd::Identity(p_.N, p_.N);
      tq.lin = 2.0 * p_.t1;
      numerics::QpOptions o;
      o.warm_start = v0;
      const auto st = numerics::solve_qp(tq, o);
      if (!st.optimal() || p_.terminal_tight(*st.point) > 0.0) return out;
    }

    // Dual bisection on the terminal multiplier.
    double lo = 0.0, hi = std::max(1e-6, p_.H.norm() / std::max(p_.T.norm(), 1e-300));
    double bound = p_.cost(v0);
    VectorXd vhi;
    for (int it = 0; it < 80; ++it) {
      const auto s = run(hi, v0);
      if (!s.optimal()) throw Error(ErrorCode::NodeBudget, "MPC relaxation did not converge");
      const double g = p_.terminal_tight(*s.point);
      bound = std::max(bound, p_.cost(*s.point) + hi * g);
      if (bound >= cutoff - gap) return out;
      if (g <= 0.0) {
        vhi = *s.point;
        break;
      }
      lo = hi;
      hi *= 4.0;
    }
    if (vhi.size() == 0) return out;
    for (int it = 0; it < 60; ++it) {
      const double g_hi = p_.terminal_tight(vhi);
      if (g_hi >= -1e-7 * std::max(1.0, p_.eps_star) || hi - lo <= 1e-9 * hi) break;
      if (p_.cost(vhi) - bound <= kGap * std::max(1.0, std::abs(bound))) break;
      const double mid = 0.5 * (lo + hi);
      const auto s = run(mid, vhi);
      if (!s.optimal()) throw Error(ErrorCode::NodeBudget, "MPC relaxation did not converge");
      const double g = p_.terminal_tight(*s.point);
      bound = std::max(bound, p_.cost(*s.point) + mid * g);
      if (bound >= cutoff - gap) return out;
      if (g <= 0.0) {
        hi = mid;
        vhi = *s.point;
      } else {
        lo = mid;
      }
    }
    out.feasible = true;
    out.v = vhi;
    out.cost = p_.cost(vhi);
    out.bound = std::min(bound, out.cost);
    return out;
  }

 private:
  const Problem& p_;
  const geometry::PolyUnion& u_;
  const VectorXd& z0_;
};

VectorXd nominal_rollout(const Problem& p, const RowVectorXd& K, const VectorXd& z0) {
  VectorXd v = VectorXd::Zero(p.N);
  for (int k = 0; k < p.N; ++k) {
    const VectorXd z = p.Phi[k] * z0 + p.Gam[k] * v;  // only v_0..v_{k-1} matter
    v[k] = K.dot(z);
  }
  return v;
}

bool feasible(const Problem& p, const geometry::PolyUnion& u, const VectorXd& z0, const VectorXd& v) {
  if (p.terminal(v) > 0.0) return false;
  for (int k = 0; k < p.N; ++k)
    if (!step_ok(u, p, z0, v, k)) return false;
  return true;
}

}  // namespace

double mpc_cost(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0, const VectorXd& v,
                MatrixXd* z) {
  const Problem p = build(cfg, model, z0);
  if (z) {
    z->resize(p.N + 1, p.n);
    for (int k = 0; k <= p.N; ++k) z->row(k) = (p.Phi[k] * z0 + p.Gam[k] * v).transpose();
  }
  return p.cost(v);
}

bool mpc_feasible(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0, const VectorXd& v) {
  return feasible(build(cfg, model, z0), cfg.vtilde, z0, v);
}

MpcSolution fmpc_solve(const MpcConfig& cfg, const models::FlatModel& model, const VectorXd& z0,
                       const std::optional<VectorXd>& warm) {
  if (!z0.allFinite()) throw Error(ErrorCode::NonFinite, "MPC initial state is not finite");
  if (cfg.steps < 1 || !(cfg.horizon > 0.0)) throw std::invalid_argument("fmpc_solve: bad horizon");
  if (cfg.vtilde.dim != model.n() + 1) throw std::invalid_argument("fmpc_solve: union dimension mismatch");
  const Problem p = build(cfg, model, z0);
  const NodeSolver solver(p, cfg.vtilde, z0);

  MpcSolution best;
  double U = std::numeric_limits<double>::infinity();
  auto offer = [&](const VectorXd& v) {
    if (v.size() != p.N || !feasible(p, cfg.vtilde, z0, v)) return;
    const double c = p.cost(v);
    if (c < U) {
      U = c;
      best.v = v;
    }
  };
  if (warm) offer(*warm);
  offer(nominal_rollout(p, cfg.terminal.Kstar, z0));

  // greedy dive: pin every stray step to its nearest cell at once
  {
    std::vector<int> fix(p.N, -1);
    for (int it = 0; it < 2 * p.N; ++it) {
      const NodeResult r = solver.solve(fix);
      ++best.nodes;
      if (!r.feasible) break;
      bool moved = false;
      for (int k = 0; k < p.N; ++k) {
        if (fix[k] >= 0 || step_ok(cfg.vtilde, p, z0, r.v, k)) continue;
        int arg = 0;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cfg.vtilde.cells.size(); ++c) {
          const double mc = step_margin(cfg.vtilde.cells[c], p, z0, r.v, k);
          if (mc > m) m = mc, arg = static_cast<int>(c);
        }
        fix[k] = arg;
        moved = true;
      }
      if (!moved) {
        offer(r.v);
        break;
      }
    }
  }

  std::vector<std::vector<int>> stack{std::vector<int>(p.N, -1)};
  while (!stack.empty()) {
    std::vector<int> fix = std::move(stack.back());
    stack.pop_back();
    if (++best.nodes > cfg.node_limit) throw Error(ErrorCode::NodeBudget, "MPC branch and bound exceeded its node limit");
    const NodeResult r = solver.solve(fix, U);
    if (!r.feasible || r.bound >= U - kGap * std::max(1.0, std::abs(U))) continue;

    int step = -1;
    for (int k = 0; k < p.N && step < 0; ++k)
      if (fix[k] < 0 && !step_ok(cfg.vtilde, p, z0, r.v, k)) step = k;
    if (step < 0) {
      if (r.cost < U) {
        U = r.cost;
        best.v = r.v;
      }
      continue;
    }
    // children: nearest cells popped first
    std::vector<int> order(cfg.vtilde.cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> margin(order.size());
    for (std::size_t c = 0; c < order.size(); ++c) margin[c] = step_margin(cfg.vtilde.cells[c], p, z0, r.v, step);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return margin[a] > margin[b]; });
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      fix[step] = *it;
      stack.push_back(fix);
    }
  }

  if (!std::isfinite(U)) throw Error(ErrorCode::InfeasibleMPC, "no admissible input sequence reaches the terminal set");
  best.feasible = true;
  best.cost = U;
  best.z.resize(p.N + 1, p.n);
  for (int k = 0; k <= p.N; ++k) best.z.row(k) = (p.Phi[k] * z0 + p.Gam[k] * best.v).transpose();
  return best;
}

}  // namespace flatpi::controllers
