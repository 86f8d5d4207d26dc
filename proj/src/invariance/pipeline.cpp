#include "flatpi/error.hpp"
#include "flatpi/invariance.hpp"

namespace flatpi::invariance {
namespace {

std::vector<double> vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::json mat(const MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) j.push_back(vec(m.row(i).transpose()));
  return j;
}

MatrixXd mat_from(const nlohmann::json& j, int n) {
  MatrixXd m(n, n);
  if (j.size() != static_cast<std::size_t>(n)) throw Error(ErrorCode::FormatError, "matrix row count");
  for (int i = 0; i < n; ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (row.size() != static_cast<std::size_t>(n)) throw Error(ErrorCode::FormatError, "matrix column count");
    for (int k = 0; k < n; ++k) m(i, k) = row[k];
  }
  return m;
}

VectorXd vec_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Level level_of(const MatrixXd& P, const geometry::PolyUnion& zk, bool skip, bool prune, int jobs,
               geometry::FacetSet* keep) {
  geometry::FacetOptions fo;
  fo.skip_activation_rows = skip;
  fo.prune = prune;
  fo.jobs = jobs;
  geometry::FacetSet fs = geometry::collect_boundary_facets(zk, fo);
  if (fs.facets.empty()) throw Error(ErrorCode::EmptyUnion, "Z_K has no boundary facets");
  Level l = compute_level_enum(P, fs, jobs);
  if (keep) *keep = std::move(fs);
  return l;
}

}  // namespace

geometry::PolyUnion tightened_union(const models::FlatModel& model, const relu::ReluNet& net, double eps, int jobs) {
  geometry::EnumerateOptions o;
  o.box = model.workspace();
  o.box_coords = model.input_dependence();
  o.jobs = jobs;
  return geometry::enumerate_cells(net, model.u_bound(), eps, o);
}

PiResult characterize_pi(const models::FlatModel& model, const relu::ReluNet& net, const relu::ApproxCert& cert,
                         double kappa, const PiOptions& opts) {
  if (!(cert.eps < model.u_bound())) throw Error(ErrorCode::EpsilonTooLarge, "approximation error exceeds the input bound");
  return characterize_pi(model, tightened_union(model, net, cert.eps, opts.jobs), kappa, opts);
}

PiResult characterize_pi(const models::FlatModel& model, const geometry::PolyUnion& vtilde, double kappa,
                         const PiOptions& opts) {
  PiResult r;
  r.gain = synth_gain(model.A(), model.B(), kappa);
  r.vtilde = vtilde;
  r.zk = geometry::substitute_gain(vtilde, r.gain.K, opts.jobs);
  r.level = level_of(r.gain.P, r.zk, opts.skip_activation_rows, opts.prune, opts.jobs, &r.facets);
  if (opts.refine) r.refined_eps = level_of(r.gain.P, r.zk, opts.skip_activation_rows, true, opts.jobs, nullptr).eps;
  r.volume = ellipsoid_volume(r.gain.P, r.level.eps);
  return r;
}

void terminal_level(TerminalCert& t, const geometry::PolyUnion& vtilde, const PiOptions& opts) {
  const geometry::PolyUnion zk = geometry::substitute_gain(vtilde, t.Kstar, opts.jobs);
  t.eps_star = level_of(t.Pstar, zk, opts.skip_activation_rows, opts.prune, opts.jobs, nullptr).eps;
}

Bundle make_bundle(const models::FlatModel& model, const relu::ApproxCert& cert, const PiResult& r) {
  Bundle b;
  b.model = model.name();
  b.model_params = model.params();
  b.gain = r.gain;
  b.eps = r.level.eps;
  b.argmin = r.level.argmin;
  b.facet = r.level.facet;
  b.cell_count = static_cast<int>(r.zk.cells.size());
  b.facet_count = r.facets.size();
  b.volume = r.volume;
  b.net_eps = cert.eps;
  b.refined_eps = r.refined_eps;
  return b;
}

nlohmann::json to_json(const Bundle& b) {
  nlohmann::json j = {{"schema_version", kBundleSchema},
                      {"kind", "flatpi-certificate"},
                      {"model", b.model},
                      {"model_params", b.model_params},
                      {"kappa", b.gain.kappa},
                      {"K", vec(b.gain.K.transpose())},
                      {"P", mat(b.gain.P)},
                      {"Upsilon", mat(b.gain.Upsilon)},
                      {"eps", b.eps},
                      {"argmin", vec(b.argmin)},
                      {"facet", b.facet},
                      {"cell_count", b.cell_count},
                      {"facet_count", b.facet_count},
                      {"volume", b.volume},
                      {"net_eps", b.net_eps}};
  if (b.refined_eps) j["refined_eps"] = *b.refined_eps;
  return j;
}

Bundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "flatpi-certificate")
      throw Error(ErrorCode::FormatError, "not a certificate bundle");
    if (j.at("schema_version").get<int>() != kBundleSchema)
      throw Error(ErrorCode::FormatError, "unsupported bundle schema version");
    Bundle b;
    b.model = j.at("model").get<std::string>();
    b.model_params = j.at("model_params");
    b.gain.kappa = j.at("kappa").get<double>();
    b.gain.K = vec_from(j.at("K")).transpose();
    const int n = static_cast<int>(b.gain.K.size());
    b.gain.P = mat_from(j.at("P"), n);
    b.gain.Upsilon = mat_from(j.at("Upsilon"), n);
    b.eps = j.at("eps").get<double>();
    b.argmin = vec_from(j.at("argmin"));
    b.facet = j.at("facet").get<int>();
    b.cell_count = j.at("cell_count").get<int>();
    b.facet_count = j.at("facet_count").get<int>();
    b.volume = j.at("volume").get<double>();
    b.net_eps = j.at("net_eps").get<double>();
    if (j.contains("refined_eps")) b.refined_eps = j["refined_eps"].get<double>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bundle: ") + e.what());
  }
}

nlohmann::json to_json(const TerminalCert& t) {
  return {{"Kstar", vec(t.Kstar.transpose())}, {"M", mat(t.M)},       {"Pstar", mat(t.Pstar)}, {"Q", mat(t.Q)},
          {"R", t.R},                          {"delta", t.delta},    {"eps_star", t.eps_star}};
}

}  // namespace flatpi::invariance
