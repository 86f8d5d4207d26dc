// flatpi: train / enumerate / synthesize / simulate / report
#include "flatpi/config.hpp"
#include "flatpi/error.hpp"
#include "flatpi/invariance.hpp"
#include "flatpi/relu.hpp"
#include "flatpi/sim.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace flatpi;
using nlohmann::json;

namespace {

// exit statuses
constexpr int kExitConfig = 1, kExitApprox = 2, kExitGeometry = 3, kExitVerify = 4;

struct Flags {
  std::string config;
  std::string weights;
  std::string out;
  std::string scenario;
  long long seed = -1;
  int jobs = -1;
  bool no_svg = false;
  bool force_clf = false;
};

struct Clock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

config::RunConfig load(const Flags& f) {
  if (f.config.empty()) throw Error(ErrorCode::ConfigError, "--config is required");
  config::RunConfig c = config::load_config(f.config);
  if (f.seed >= 0) {
    c.seed = static_cast<std::uint64_t>(f.seed);
    c.net.train.seed = c.seed;
    c.sim.seed = c.seed;
  }
  if (f.jobs >= 0) c.jobs = c.sim.jobs = f.jobs;
  if (!f.out.empty()) c.output_dir = f.out;
  if (!f.weights.empty()) c.net.weights = f.weights;
  if (!f.scenario.empty()) c.scenario = sim::scenario_from_string(f.scenario);
  if (f.no_svg) c.svg = false;
  if (f.force_clf) c.sim.force_clf = true;
  fs::create_directories(c.output_dir);
  return c;
}

fs::path out_path(const config::RunConfig& c, const std::string& name) { return fs::path(c.output_dir) / name; }

// config echo embedded in every JSON output; fields that do not change the
// results (thread count, output location) are left out so reruns compare equal
json provenance(const config::RunConfig& c) {
  json j = config::to_json(c);
  j.erase("jobs");
  j.erase("output");
  return j;
}

void write_json(const fs::path& p, const json& j) { sim::write_text(p.string(), j.dump(2) + "\n"); }

void write_timing(const config::RunConfig& c, const std::string& name, json j) {
  j["schema_version"] = config::kConfigSchema;
  write_json(out_path(c, name + "_timing.json"), j);
}

std::string weights_path(const config::RunConfig& c) {
  return c.net.weights ? *c.net.weights : out_path(c, "weights.txt").string();
}

relu::NetFile load_weights(const config::RunConfig& c, const models::FlatModel& model) {
  const std::string path = weights_path(c);
  if (!fs::exists(path)) throw Error(ErrorCode::FormatError, "weight file " + path + " not found (run train first)");
  relu::NetFile f = relu::load_net(path, model.n() + 1);
  if (!f.cert) {
    const int grid = c.net.error_grid > 0 ? c.net.error_grid : relu::default_error_grid(model);
    f.cert = relu::estimate_error_bound(f.net, model, grid, c.net.margin_factor, c.jobs);
  }
  const auto& ws = f.cert->workspace;
  const auto& want = model.workspace();
  if (ws.dim() != want.dim() || (want.lo.array() < ws.lo.array()).any() || (want.hi.array() > ws.hi.array()).any())
    throw Error(ErrorCode::ConfigError, "model.workspace is not covered by the workspace the weights were certified on");
  return f;
}

geometry::PolyUnion build_union(const config::RunConfig& c, const models::FlatModel& model, const relu::NetFile& f) {
  return invariance::tightened_union(model, f.net, f.cert->eps, c.jobs);
}

std::string bundle_name(double kappa) { return "bundle_kappa_" + num(kappa) + ".json"; }

// ---------------------------------------------------------------------------

int cmd_train(const Flags& flags) {
  const Clock clock;
  const auto c = load(flags);
  const auto model = config::build_model(c);
  relu::TrainReport rep;
  const relu::ReluNet net = relu::train_net(*model, c.net.train, &rep);
  const int grid = c.net.error_grid > 0 ? c.net.error_grid : relu::default_error_grid(*model);
  const relu::ApproxCert cert = relu::estimate_error_bound(net, *model, grid, c.net.margin_factor, c.jobs);
  const std::string path = out_path(c, "weights.txt").string();
  relu::save_net(path, net, cert);

  write_json(out_path(c, "train.json"), {{"schema_version", config::kConfigSchema},
                                          {"model", model->name()},
                                          {"weights", "weights.txt"},
                                          {"eps", cert.eps},
                                          {"max_deviation", cert.max_deviation},
                                          {"u_bar", model->u_bound()},
                                          {"error_grid", grid},
                                          {"train_samples", rep.samples},
                                          {"epochs", rep.epochs},
                                          {"mse", rep.mse},
                                          {"config", provenance(c)}});
  write_timing(c, "train", {{"seconds", clock.seconds()}});
  std::cout << "model " << model->name() << ", hidden " << net.n1() << ", " << rep.samples << " grid samples, "
            << rep.epochs << " epochs, mse " << rep.mse << "\n"
            << "error bound eps = " << cert.eps << " (max deviation " << cert.max_deviation << " on a " << grid
            << "-point grid per coordinate, margin " << cert.margin_factor << "); u_bar = " << model->u_bound()
            << "\nwrote " << path << "\n";
  return 0;
}

int cmd_enumerate(const Flags& flags) {
  const Clock clock;
  const auto c = load(flags);
  const auto model = config::build_model(c);
  const auto f = load_weights(c, *model);
  const auto u = build_union(c, *model, f);
  json j = geometry::to_json(u);
  j["schema_version"] = config::kConfigSchema;
  j["net_eps"] = f.cert->eps;
  j["u_bar"] = model->u_bound();
  j["config"] = provenance(c);
  const fs::path p = out_path(c, "union.json");
  write_json(p, j);
  write_timing(c, "enumerate", {{"seconds", clock.seconds()}});
  std::size_t rows = 0;
  for (const auto& cell : u.cells) rows += cell.rows();
  std::cout << u.cells.size() << " cells (" << rows << " rows) in the tightened union, eps = " << f.cert->eps
            << "\nwrote " << p.string() << "\n";
  return 0;
}

int cmd_synthesize(const Flags& flags) {
  const Clock clock;
  const auto c = load(flags);
  const auto model = config::build_model(c);
  const auto f = load_weights(c, *model);
  const auto u = build_union(c, *model, f);

  std::ostringstream md, csv;
  md << "| kappa | K | eps | cells | facets | volume |\n|---|---|---|---|---|---|\n";
  csv << "kappa,eps,cells,facets,volume\n";
  invariance::PiOptions po;
  po.jobs = c.jobs;
  for (double kappa : c.kappas) {
    const auto pi = invariance::characterize_pi(*model, u, kappa, po);
    const auto b = invariance::make_bundle(*model, *f.cert, pi);
    json j = invariance::to_json(b);
    j["config"] = provenance(c);
    write_json(out_path(c, bundle_name(kappa)), j);
    std::ostringstream k;
    for (int i = 0; i < b.gain.K.size(); ++i) k << (i ? ", " : "") << fixed(b.gain.K[i], 4);
    md << "| " << kappa << " | (" << k.str() << ") | " << fixed(b.eps, 6) << " | " << b.cell_count << " | "
       << b.facet_count << " | " << fixed(b.volume, 6) << " |\n";
    csv << num(kappa) << ',' << num(b.eps) << ',' << b.cell_count << ',' << b.facet_count << ',' << num(b.volume)
        << "\n";
  }
  if (model->name() == "quad1d") {
    const auto& m = c.sim.mpc;
    const int n = model->n();
    if (static_cast<int>(m.kstar.size()) != n) throw Error(ErrorCode::ConfigError, "controllers.mpc.k_terminal has the wrong length");
    const Eigen::RowVectorXd Ks = Eigen::Map<const Eigen::RowVectorXd>(m.kstar.data(), n);
    auto t = invariance::synth_terminal(model->A(), model->B(), Ks, m.q * Eigen::MatrixXd::Identity(n, n), m.r, m.delta);
    invariance::terminal_level(t, u, po);
    json j = invariance::to_json(t);
    j["schema_version"] = config::kConfigSchema;
    j["kind"] = "flatpi-terminal";
    j["config"] = provenance(c);
    write_json(out_path(c, "terminal.json"), j);
    md << "\nterminal set: eps* = " << fixed(t.eps_star, 6) << " (delta = " << t.delta << ")\n";
  }
  sim::write_text(out_path(c, "synthesis.md").string(), "# " + model->name() + " certificates\n\n" + md.str());
  sim::write_text(out_path(c, "synthesis.csv").string(), csv.str());
  write_timing(c, "synthesize", {{"seconds", clock.seconds()}});
  std::cout << md.str() << "wrote " << c.kappas.size() << " bundle(s) to " << c.output_dir << "\n";
  return 0;
}

std::string file_stem(std::string name) {
  for (char& ch : name)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-') ch = '_';
  while (!name.empty() && name.back() == '_') name.pop_back();
  return name;
}

int cmd_simulate(const Flags& flags) {
  const Clock clock;
  const auto c = load(flags);
  if (!c.scenario) throw Error(ErrorCode::ConfigError, "no scenario: set scenario.name or pass --scenario");
  const auto model = config::build_model(c);
  const auto f = load_weights(c, *model);
  const auto u = build_union(c, *model, f);
  const auto res = sim::run_scenario(*c.scenario, *model, u, c.sim);
  const std::string tag = sim::to_string(*c.scenario);
  const double ub = c.sim.verify_u_bar ? *c.sim.verify_u_bar : model->u_bound();

  json runs = json::array(), timing = json::array();
  std::cout << std::left << std::setw(34) << "controller" << std::setw(7) << "ok" << std::setw(12) << "max|u|/ub"
            << std::setw(12) << "max V/eps" << "mean CT [s]  max CT [s]\n";
  for (const auto& r : res.runs) {
    json j = {{"name", r.name}, {"ok", r.ok}, {"simulated", r.simulated}, {"info", r.info}};
    if (r.simulated) j["report"] = sim::to_json(r.report);
    if (r.trace.size() > 0) {
      const std::string stem = tag + "_" + file_stem(r.name);
      sim::write_csv(r.trace, out_path(c, stem + ".csv").string());
      j["trace"] = stem + ".csv";
      if (c.svg) sim::write_text(out_path(c, stem + ".svg").string(), sim::format_svg(r.trace, tag + " " + r.name, ub));
    }
    runs.push_back(j);
    timing.push_back({{"name", r.name}, {"calls", r.timing.calls}, {"mean", r.timing.mean}, {"max", r.timing.max}});
    std::cout << std::setw(34) << r.name << std::setw(7) << (r.ok ? "yes" : "NO");
    if (r.simulated)
      std::cout << std::setw(12) << fixed(r.report.worst_input_ratio, 4) << std::setw(12)
                << fixed(r.report.max_level_ratio, 4) << std::setw(13) << fixed(r.timing.mean, 3) << fixed(r.timing.max, 3);
    else if (r.info.contains("status_t0"))
      std::cout << "not run: " << r.info["status_t0"].get<std::string>() << " (V/eps = " << fixed(r.info["V0_over_eps"].get<double>(), 4) << ")";
    std::cout << "\n";
  }
  write_json(out_path(c, tag + "_report.json"), {{"schema_version", config::kConfigSchema},
                                                  {"scenario", tag},
                                                  {"ok", res.ok()},
                                                  {"u_bar_checked", ub},
                                                  {"certificates", res.certificates},
                                                  {"runs", runs},
                                                  {"config", provenance(c)}});
  write_timing(c, tag, {{"scenario", tag}, {"seconds", clock.seconds()}, {"controllers", timing}});
  std::cout << (res.ok() ? "all checks passed" : "VERIFICATION FAILED") << "; outputs in " << c.output_dir << "\n";
  return res.ok() ? 0 : kExitVerify;
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, p.string() + ": " + e.what());
  }
}

int cmd_report(const Flags& flags) {
  const auto c = load(flags);
  std::vector<fs::path> bundles, reports;
  for (const auto& e : fs::directory_iterator(c.output_dir)) {
    const std::string n = e.path().filename().string();
    if (n.rfind("bundle_kappa_", 0) == 0 && e.path().extension() == ".json") bundles.push_back(e.path());
    if (n.size() > 12 && n.substr(n.size() - 12) == "_report.json") reports.push_back(e.path());
  }
  std::sort(bundles.begin(), bundles.end());
  std::sort(reports.begin(), reports.end());
  if (bundles.empty() && reports.empty())
    throw Error(ErrorCode::FormatError, "nothing to report in " + c.output_dir + " (run synthesize or simulate first)");

  std::ostringstream md, csv, ct;
  md << "# flatpi report\n\n";
  if (!bundles.empty()) {
    std::vector<invariance::Bundle> bs;
    for (const auto& p : bundles) bs.push_back(invariance::bundle_from_json(read_json(p)));
    std::sort(bs.begin(), bs.end(), [](const auto& a, const auto& b) { return a.gain.kappa < b.gain.kappa; });
    md << "## Invariant sets (" << bs.front().model << ")\n\n| kappa | eps | cells | facets | volume |\n|---|---|---|---|---|\n";
    csv << "kappa,eps,cells,facets,volume\n";
    for (const auto& b : bs) {
      md << "| " << b.gain.kappa << " | " << fixed(b.eps, 6) << " | " << b.cell_count << " | " << b.facet_count << " | "
         << fixed(b.volume, 6) << " |\n";
      csv << num(b.gain.kappa) << ',' << num(b.eps) << ',' << b.cell_count << ',' << b.facet_count << ','
          << num(b.volume) << "\n";
    }
    md << "\n";
  }
  ct << "# Online computation time per controller call\n\n| scenario | controller | calls | mean [s] | max [s] |\n|---|---|---|---|---|\n";
  for (const auto& p : reports) {
    const json r = read_json(p);
    const std::string tag = r.at("scenario").get<std::string>();
    md << "## " << tag << (r.at("ok").get<bool>() ? "" : " (FAILED)") << "\n\n"
       << "| controller | ok | max abs(u)/u_bar | max V/eps | note |\n|---|---|---|---|---|\n";
    std::size_t shown = 0, total = 0, passed = 0;
    for (const auto& run : r.at("runs")) {
      ++total;
      passed += run.at("ok").get<bool>();
      const std::string name = run.at("name").get<std::string>();
      // aircraft sweeps have many starts; list the first per gain
      if (name.find("start=") != std::string::npos && name.find("start=0]") == std::string::npos) continue;
      ++shown;
      md << "| " << name << " | " << (run.at("ok").get<bool>() ? "yes" : "no") << " | ";
      if (run.at("simulated").get<bool>()) {
        const auto& rep = run.at("report");
        md << fixed(rep.at("worst_input_ratio").get<double>(), 4) << " | " << fixed(rep.at("max_level_ratio").get<double>(), 4)
           << " | ";
      } else {
        md << "- | - | ";
      }
      const auto& info = run.at("info");
      if (info.contains("status_t0") && !run.at("simulated").get<bool>())
        md << "x: " << info["status_t0"].get<std::string>();
      else if (info.contains("final_state_norm"))
        md << "final norm(x) " << fixed(info["final_state_norm"].get<double>(), 3);
      else if (info.contains("final_level_ratio"))
        md << "final V/eps " << fixed(info["final_level_ratio"].get<double>(), 3);
      md << " |\n";
    }
    if (shown < total) md << "\n" << passed << " of " << total << " runs passed.\n";
    md << "\n";

    fs::path tp = p;
    tp.replace_filename(tag + "_timing.json");
    if (fs::exists(tp))
      for (const auto& t : read_json(tp).at("controllers")) {
        const std::string name = t.at("name").get<std::string>();
        if (name.find("start=") != std::string::npos && name.find("start=0]") == std::string::npos) continue;
        ct << "| " << tag << " | " << name << " | " << t.at("calls").get<long>() << " | "
           << fixed(t.at("mean").get<double>(), 3) << " | " << fixed(t.at("max").get<double>(), 3) << " |\n";
      }
  }
  sim::write_text(out_path(c, "report.md").string(), md.str());
  if (!bundles.empty()) sim::write_text(out_path(c, "report.csv").string(), csv.str());
  sim::write_text(out_path(c, "report_timing.md").string(), ct.str());
  std::cout << md.str() << ct.str();
  return 0;
}

int exit_code(const Error& e, const std::string& cmd) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::FormatError: return kExitConfig;
    case ErrorCode::EpsilonTooLarge: return kExitApprox;
    case ErrorCode::NonFinite: return cmd == "train" ? kExitApprox : kExitVerify;
    case ErrorCode::EmptyUnion:
    case ErrorCode::OriginExcluded:
    case ErrorCode::OriginOnBoundary:
    case ErrorCode::BigMTooSmall:
    case ErrorCode::NotControllable:
    case ErrorCode::NotHurwitz:
    case ErrorCode::SingularPencil: return kExitGeometry;
    case ErrorCode::DomainError:
    case ErrorCode::NodeBudget:
    case ErrorCode::InfeasibleFilter:
    case ErrorCode::InfeasibleMPC: return kExitVerify;
  }
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flat-output invariant sets with ReLU input-constraint surrogates"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&f](CLI::App* sub, bool weights) {
    sub->add_option("-c,--config", f.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", f.out, "output directory (overrides output.dir)");
    sub->add_option("--seed", f.seed, "random seed (overrides seed)")->check(CLI::NonNegativeNumber);
    sub->add_option("-j,--jobs", f.jobs, "worker threads, 0 = all cores (overrides jobs)")->check(CLI::NonNegativeNumber);
    if (weights) sub->add_option("-w,--weights", f.weights, "weight file (overrides net.weights and <out>/weights.txt)");
  };
  auto* train = app.add_subcommand("train", "fit the ReLU surrogate and certify its error bound");
  common(train, false);
  auto* enumerate = app.add_subcommand("enumerate", "enumerate the activation regions of the tightened union");
  common(enumerate, true);
  auto* synthesize = app.add_subcommand("synthesize", "certificate bundle per kappa (plus the MPC terminal set for quad1d)");
  common(synthesize, true);
  auto* simulate = app.add_subcommand("simulate", "closed-loop runs, traces, verification reports");
  common(simulate, true);
  simulate->add_option("-s,--scenario", f.scenario, "aircraft_multigain | quad_case1 | quad_case2 (overrides scenario.name)");
  simulate->add_flag("--no-svg", f.no_svg, "skip SVG plots");
  simulate->add_flag("--force-clf", f.force_clf, "simulate the CLF filter even from outside its certificate");
  auto* report = app.add_subcommand("report", "summarize bundles and simulation reports found in the output directory");
  common(report, false);
  app.footer(
      "Exit status: 0 ok, 1 config or file format, 2 approximation (eps >= u_bar), 3 geometry or synthesis, 4 "
      "verification failed.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "train") return cmd_train(f);
    if (cmd == "enumerate") return cmd_enumerate(f);
    if (cmd == "synthesize") return cmd_synthesize(f);
    if (cmd == "simulate") return cmd_simulate(f);
    return cmd_report(f);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e, cmd);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
