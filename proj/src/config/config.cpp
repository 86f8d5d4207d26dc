#include "flatpi/config.hpp"

#include "flatpi/error.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <type_traits>

namespace flatpi::config {
namespace {

using nlohmann::json;
using Eigen::VectorXd;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigError, (path.empty() ? std::string("config") : path) + ": " + what);
}

template <class T>
T convert(const json& v, const std::string& path) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) fail(path, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
      fail(path, "expected a non-negative integer");
    return v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  } else {
    // std::vector<E>
    if (!v.is_array()) fail(path, "expected an array");
    T out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }
}

// Object reader that remembers which keys were consumed.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  void opt(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, at(key));
  }

  template <class T>
  T req(const std::string& key) {
    const json* v = find(key);
    if (!v) fail(at(key), "required");
    return convert<T>(*v, at(key));
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void positive(double v, const std::string& path) {
  if (!(v > 0.0)) fail(path, "must be positive");
}

VectorXd to_vec(const std::vector<double>& v) { return Eigen::Map<const VectorXd>(v.data(), static_cast<long>(v.size())); }
std::vector<double> from_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

RunConfig parse_config(const json& j, const std::string& base_dir) {
  RunConfig c;
  Obj root(j, "");
  const int version = root.req<int>("schema_version");
  if (version != kConfigSchema)
    fail("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                               std::to_string(kConfigSchema) + ")");

  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? p : (std::filesystem::path(base_dir) / path).lexically_normal().string();
  };

  {
    const json* m = root.find("model");
    if (!m) fail("model", "required");
    Obj o(*m, "model");
    c.model = o.req<std::string>("name");
    if (c.model != "aircraft" && c.model != "quad1d") fail("model.name", "unknown model '" + c.model + "'");
    if (const json* p = o.find("params")) {
      if (!p->is_object()) fail("model.params", "expected an object");
      c.model_params = *p;
    }
    const json* w = o.find("workspace");
    if (!w) fail("model.workspace", "required");
    Obj ws(*w, "model.workspace");
    c.workspace.lo = to_vec(ws.req<std::vector<double>>("lo"));
    c.workspace.hi = to_vec(ws.req<std::vector<double>>("hi"));
    ws.done();
    o.done();
  }

  if (const json* n = root.find("net")) {
    Obj o(*n, "net");
    std::string w;
    o.opt("weights", w);
    if (!w.empty()) c.net.weights = resolve(w);
    if (const json* t = o.find("train")) {
      Obj tr(*t, "net.train");
      auto& opt = c.net.train;
      tr.opt("hidden", opt.n1);
      tr.opt("grid", opt.grid);
      tr.opt("epochs", opt.epochs);
      tr.opt("learning_rate", opt.learning_rate);
      tr.opt("momentum", opt.momentum);
      tr.done();
      if (opt.n1 < 1) fail("net.train.hidden", "must be at least 1");
      if (opt.grid < 2) fail("net.train.grid", "must be at least 2");
      if (opt.epochs < 1) fail("net.train.epochs", "must be at least 1");
      positive(opt.learning_rate, "net.train.learning_rate");
    }
    o.opt("error_grid", c.net.error_grid);
    o.opt("margin_factor", c.net.margin_factor);
    if (c.net.margin_factor < 1.0) fail("net.margin_factor", "must be >= 1");
    if (c.net.error_grid < 0 || c.net.error_grid == 1) fail("net.error_grid", "must be 0 (default) or >= 2");
    o.done();
  }

  root.opt("kappas", c.kappas);
  if (c.kappas.empty()) fail("kappas", "must not be empty");
  for (double k : c.kappas) positive(k, "kappas");

  auto& s = c.sim;
  if (const json* sc = root.find("scenario")) {
    Obj o(*sc, "scenario");
    std::string name;
    o.opt("name", name);
    if (!name.empty()) {
      try {
        c.scenario = sim::scenario_from_string(name);
      } catch (const Error& e) {
        fail("scenario.name", "unknown scenario '" + name + "'");
      }
    }
    o.opt("dt", s.dt);
    o.opt("T", s.T);
    o.opt("kappa", s.kappa);
    o.opt("starts", s.starts);
    o.opt("start_level", s.start_level);
    o.opt("force_clf", s.force_clf);
    o.opt("keep_all_traces", s.keep_all_traces);
    double vb = 0.0;
    o.opt("verify_u_bar", vb);
    if (o.find("verify_u_bar")) {
      positive(vb, "scenario.verify_u_bar");
      s.verify_u_bar = vb;
    }
    o.done();
    positive(s.dt, "scenario.dt");
    if (s.T < 0.0) fail("scenario.T", "must be >= 0 (0 picks the scenario default)");
    positive(s.kappa, "scenario.kappa");
    if (s.starts < 1) fail("scenario.starts", "must be at least 1");
    if (!(s.start_level > 0.0 && s.start_level <= 1.0)) fail("scenario.start_level", "must be in (0, 1]");
  }
  // the aircraft scenario sweeps the same gains that synthesize writes out
  s.kappas = c.kappas;

  if (const json* ct = root.find("controllers")) {
    Obj o(*ct, "controllers");
    o.opt("enabled", s.controllers);
    for (const auto& name : s.controllers)
      if (name != "clf" && name != "erg" && name != "mpc") fail("controllers.enabled", "unknown controller '" + name + "'");
    if (const json* cl = o.find("clf")) {
      Obj x(*cl, "controllers.clf");
      x.opt("k_desired", s.k_lqr);
      x.done();
    }
    if (const json* e = o.find("erg")) {
      Obj x(*e, "controllers.erg");
      x.opt("lambda", s.erg_lambda);
      x.opt("eta", s.erg_eta);
      x.opt("allow_negative_margin", s.allow_negative_margin);
      x.done();
      positive(s.erg_lambda, "controllers.erg.lambda");
      positive(s.erg_eta, "controllers.erg.eta");
    }
    if (const json* m = o.find("mpc")) {
      Obj x(*m, "controllers.mpc");
      auto& t = s.mpc;
      x.opt("q", t.q);
      x.opt("r", t.r);
      x.opt("k_terminal", t.kstar);
      x.opt("delta", t.delta);
      x.opt("horizon", t.horizon);
      x.opt("steps", t.steps);
      x.opt("escalate_steps", t.escalate_steps);
      x.opt("max_steps", t.max_steps);
      x.opt("node_limit", t.node_limit);
      x.done();
      positive(t.q, "controllers.mpc.q");
      positive(t.r, "controllers.mpc.r");
      positive(t.horizon, "controllers.mpc.horizon");
      if (t.steps < 1) fail("controllers.mpc.steps", "must be at least 1");
      if (t.escalate_steps < 0) fail("controllers.mpc.escalate_steps", "must be >= 0");
      if (t.node_limit < 1) fail("controllers.mpc.node_limit", "must be at least 1");
    }
    o.done();
  }

  if (const json* out = root.find("output")) {
    Obj o(*out, "output");
    o.opt("dir", c.output_dir);
    o.opt("svg", c.svg);
    o.done();
  }
  c.output_dir = resolve(c.output_dir);

  root.opt("seed", c.seed);
  root.opt("jobs", c.jobs);
  if (c.jobs < 0) fail("jobs", "must be >= 0 (0 uses every core)");
  root.done();

  c.net.train.seed = c.seed;
  s.seed = c.seed;
  s.jobs = c.jobs;
  build_model(c);  // catches bad overrides and workspace shapes up front
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

json to_json(const RunConfig& c) {
  const auto& s = c.sim;
  json j;
  j["schema_version"] = kConfigSchema;
  j["model"] = {{"name", c.model},
                {"params", c.model_params},
                {"workspace", {{"lo", from_vec(c.workspace.lo)}, {"hi", from_vec(c.workspace.hi)}}}};
  json net = {{"train",
               {{"hidden", c.net.train.n1},
                {"grid", c.net.train.grid},
                {"epochs", c.net.train.epochs},
                {"learning_rate", c.net.train.learning_rate},
                {"momentum", c.net.train.momentum}}},
              {"error_grid", c.net.error_grid},
              {"margin_factor", c.net.margin_factor}};
  if (c.net.weights) net["weights"] = *c.net.weights;
  j["net"] = net;
  j["kappas"] = c.kappas;
  json sc = {{"dt", s.dt},
             {"T", s.T},
             {"kappa", s.kappa},
             {"starts", s.starts},
             {"start_level", s.start_level},
             {"force_clf", s.force_clf},
             {"keep_all_traces", s.keep_all_traces}};
  if (c.scenario) sc["name"] = sim::to_string(*c.scenario);
  if (s.verify_u_bar) sc["verify_u_bar"] = *s.verify_u_bar;
  j["scenario"] = sc;
  j["controllers"] = {{"enabled", s.controllers},
                      {"clf", {{"k_desired", s.k_lqr}}},
                      {"erg", {{"lambda", s.erg_lambda}, {"eta", s.erg_eta}, {"allow_negative_margin", s.allow_negative_margin}}},
                      {"mpc",
                       {{"q", s.mpc.q},
                        {"r", s.mpc.r},
                        {"k_terminal", s.mpc.kstar},
                        {"delta", s.mpc.delta},
                        {"horizon", s.mpc.horizon},
                        {"steps", s.mpc.steps},
                        {"escalate_steps", s.mpc.escalate_steps},
                        {"max_steps", s.mpc.max_steps},
                        {"node_limit", s.mpc.node_limit}}}};
  j["output"] = {{"dir", c.output_dir}, {"svg", c.svg}};
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  return j;
}

std::unique_ptr<models::FlatModel> build_model(const RunConfig& c) {
  auto m = models::make_model(c.model, c.model_params);
  m->set_workspace(c.workspace);
  return m;
}

}  // namespace flatpi::config
