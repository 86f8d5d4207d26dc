#pragma once

#include "flatpi/invariance.hpp"
#include "flatpi/models.hpp"
#include "flatpi/relu.hpp"

#include <memory>
#include <string>

namespace flatpi::testing {

struct CaseStudy {
  std::unique_ptr<models::FlatModel> model;
  relu::NetFile file;
  invariance::PiResult pi;
};

inline CaseStudy load_case(const std::string& name, double kappa) {
  CaseStudy c;
  c.model = models::make_model(name);
  c.file = relu::load_net(std::string(FLATPI_FIXTURE_DIR) + "/" + name + "_net.txt");
  c.pi = invariance::characterize_pi(*c.model, c.file.net, *c.file.cert, kappa);
  return c;
}

// quad, kappa = 0.5; built once per test binary
inline const CaseStudy& quad_case() {
  static const CaseStudy c = load_case("quad1d", 0.5);
  return c;
}

inline invariance::TerminalCert quad_terminal(const CaseStudy& c, double delta = 10.0) {
  Eigen::RowVectorXd Ks(3);
  Ks << -1.0, -2.41, -2.41;
  auto t = invariance::synth_terminal(c.model->A(), c.model->B(), Ks, 10.0 * Eigen::MatrixXd::Identity(3, 3), 10.0,
                                      delta);
  invariance::terminal_level(t, c.pi.vtilde);
  return t;
}

}  // namespace flatpi::testing
