#pragma once

#include "flatpi/models.hpp"
#include "flatpi/relu.hpp"
#include "flatpi/sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flatpi::config {

inline constexpr int kConfigSchema = 1;

struct NetSource {
  /// weight file; when unset the net is trained (or read from the output dir)
  std::optional<std::string> weights;
  relu::TrainOptions train;
  int error_grid = 0;  // 0 -> default for the model
  double margin_factor = 1.2;
};

struct RunConfig {
  std::string model;
  nlohmann::json model_params = nlohmann::json::object();
  models::Box workspace;
  NetSource net;
  std::vector<double> kappas{0.01, 0.1, 0.5};
  std::optional<sim::Scenario> scenario;
  sim::ScenarioConfig sim;
  std::string output_dir = "out";
  bool svg = true;
  std::uint64_t seed = 1;
  int jobs = 0;
};

/// Validates against the schema (see README): unknown keys, wrong types and
/// missing required fields (schema_version, model.name, model.workspace)
/// throw ConfigError naming the offending path. Relative paths are resolved
/// against base_dir.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir = "");
RunConfig load_config(const std::string& path);

/// Normalized form with every default spelled out; parse_config(to_json(c))
/// gives c back.
nlohmann::json to_json(const RunConfig& c);

/// Model with the overrides and workspace applied.
std::unique_ptr<models::FlatModel> build_model(const RunConfig& c);

}  // namespace flatpi::config
