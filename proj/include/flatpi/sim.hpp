#pragma once

#include "flatpi/controllers.hpp"
#include "flatpi/geometry.hpp"
#include "flatpi/invariance.hpp"
#include "flatpi/models.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace flatpi::sim {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// What a controller hands back for one sample. Fields other than u are
/// bookkeeping for the trace (NaN when the law has no such quantity).
struct Action {
  double u = 0.0;
  double v = kNaN;
  double V = kNaN;
  std::optional<double> r_f;
};

/// Called once per step at (t_k, x_k); u is held over [t_k, t_k + dt).
/// May keep state between calls (governor reference, MPC plan).
using Controller = std::function<Action(double t, const VectorXd& x)>;

struct SimTrace {
  std::vector<double> times;
  std::vector<VectorXd> states;
  std::vector<VectorXd> flat_states;
  std::vector<double> inputs;
  std::vector<double> virtual_inputs;
  std::vector<double> clf_values;
  std::optional<std::vector<double>> references;
  /// wall time of each controller call, seconds (kept out of exported traces)
  std::vector<double> step_seconds;

  std::size_t size() const { return times.size(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

/// Classic RK4 with zero-order-hold input; the controller is also evaluated
/// at the final time so every column has one entry per time stamp.
SimTrace simulate(const models::FlatModel& model, const Controller& controller, const VectorXd& x0, double T,
                  double dt);

struct VerifyOptions {
  bool check_decrease = true;
  /// decrease tolerance = decrease_scale * dt * max V
  double decrease_scale = 1.0;
  double level_rtol = 1e-6;
  double input_rtol = 1e-9;
};

struct VerificationReport {
  bool constraint_ok = true;
  double worst_input_ratio = 0.0;  // max |u| / u_bar
  bool invariance_ok = true;
  bool entered = false;
  double entry_time = kNaN;
  double max_level_ratio = 0.0;  // max V / eps after entry
  bool decrease_checked = false;
  bool decrease_ok = true;
  double max_decrease = -std::numeric_limits<double>::infinity();  // max (V_{k+1}-V_k)/dt + kappa V_k
  double decrease_tol = 0.0;
  std::vector<std::string> notes;

  bool ok() const { return constraint_ok && invariance_ok && decrease_ok; }
};

/// V_k = (z_k - r_k e1)' P (z_k - r_k e1), with r_k = 0 when the trace has no
/// references. (i) V_k <= eps (1 + level_rtol) from the first sample inside
/// on, (ii) |u_k| <= u_bar (1 + input_rtol), (iii) on samples inside the set,
/// (V_{k+1} - V_k)/dt + kappa V_k <= tol.
VerificationReport verify_invariance(const SimTrace& trace, const MatrixXd& P, double eps, double kappa,
                                     double u_bar, const VerifyOptions& opts = {});

nlohmann::json to_json(const VerificationReport& r);

// ---------------------------------------------------------------------------
// Scenarios

enum class Scenario { AircraftMultigain, QuadCase1, QuadCase2 };
Scenario scenario_from_string(const std::string& s);  // ConfigError on unknown names
std::string to_string(Scenario s);

struct MpcTuning {
  double q = 10.0;  // Q = q I
  double r = 10.0;
  std::vector<double> kstar{-1.0, -2.41, -2.41};
  double delta = 10.0;
  double horizon = 2.0;
  int steps = 20;
  /// on InfeasibleMPC at t = 0 the horizon grows by this many steps (same
  /// step length) until feasible or max_steps is passed
  int escalate_steps = 10;
  int max_steps = 200;
  long node_limit = 20000;
};

struct ScenarioConfig {
  double dt = 1e-3;
  double T = 0.0;  // 0 -> 10 s aircraft, 20 s case 1, 40 s case 2
  double kappa = 0.5;
  std::vector<double> kappas{0.01, 0.1, 0.5};  // aircraft
  int starts = 20;                              // aircraft boundary starts per kappa
  double start_level = 0.999;
  std::vector<double> k_lqr{-3.2, -5.5, -4.0};
  double erg_lambda = 20.0, erg_eta = 0.2;
  bool allow_negative_margin = false;
  MpcTuning mpc;
  std::vector<std::string> controllers{"clf", "erg", "mpc"};
  /// run the CLF closed loop in case 2 even though it starts outside
  bool force_clf = false;
  /// keep every aircraft trace instead of only the first start per kappa
  bool keep_all_traces = false;
  /// input bound the verification checks against; the model's when unset
  std::optional<double> verify_u_bar;
  std::uint64_t seed = 1;
  int jobs = 0;
};

struct Timing {
  std::size_t calls = 0;
  double mean = 0.0, max = 0.0;  // seconds per controller call
};

struct ControllerRun {
  std::string name;  // e.g. "nominal[kappa=0.1,start=3]", "clf", "erg", "mpc"
  SimTrace trace;    // may be empty when not kept
  VerificationReport report;
  Timing timing;
  bool simulated = true;
  nlohmann::json info;  // law-specific facts (statuses, costs, horizon)
  bool ok = true;       // verification plus law-specific checks
};

struct ScenarioResult {
  Scenario scenario{};
  std::vector<ControllerRun> runs;
  nlohmann::json certificates;
  bool ok() const;
};

/// Runs one of the case-study drivers on a tightened union over (z, v).
ScenarioResult run_scenario(Scenario s, const models::FlatModel& model, const geometry::PolyUnion& vtilde,
                            const ScenarioConfig& cfg);

Timing timing_of(const SimTrace& t);

// ---------------------------------------------------------------------------
// Export

/// Columns: t, x1..xn, z1..zn, u, v, V, r_f.
void write_csv(const SimTrace& t, const std::string& path);
std::string format_csv(const SimTrace& t);
/// Stacked line charts of x, u and V.
std::string format_svg(const SimTrace& t, const std::string& title, double u_bar);
void write_text(const std::string& path, const std::string& text);

}  // namespace flatpi::sim
