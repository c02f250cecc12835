#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phev/error.hpp"
#include "phev/predictor.hpp"
#include "phev/sim.hpp"

namespace phev::config {

/// Everything a command needs, resolved from one JSON document. File paths
/// are absolute (relative entries are taken against the config file's
/// directory).
struct AppConfig {
  sim::Models models;
  std::string source;  // config file path, empty for built-in defaults
  std::string cycle_path;
  double init_soc = 90.0;
  double soh = 100.0;
  double dt = 1.0;
  std::optional<double> ambient;
  std::optional<drivetrain::Mode> forced_mode;
  std::uint64_t seed = 1;
  double stop_threshold = cycle::kDefaultStopThreshold;
  double saturation_limit = 0.05;  // tolerated fraction of saturated steps

  std::string model_path;     // trained SOC predictor, may be empty
  std::string rulebase_path;  // empty means the built-in rule base
  predictor::Hyper hyper;
  double train_fraction = 0.8;
  std::uint64_t dataset_seed = 7;
  double reference_soc = 90.0;
  int synthetic_count = 12;
  std::uint64_t synthetic_seed = 100;

  nlohmann::json resolved;  // merged document after overrides
};

/// The complete default document; every accepted key appears in it.
nlohmann::json default_document();

/// Recursively overlays `patch` onto `base`. Keys absent from `base` and
/// type changes raise ConfigError naming the dotted path.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

/// Applies one `dotted.key=value` assignment. The value is parsed as JSON
/// when possible and taken as a plain string otherwise.
void apply_assignment(nlohmann::json& doc, const std::string& assignment);

struct LoadOptions {
  bool load_model = true;
};

/// Builds an AppConfig from a merged document. `base_dir` anchors relative paths.
AppConfig from_document(const nlohmann::json& doc, const std::string& base_dir, LoadOptions opts = {});

/// Reads `path` (or the built-in defaults when empty), merges it over the
/// defaults, applies the assignments in order, then resolves it.
AppConfig load(const std::string& path, const std::vector<std::string>& assignments = {},
               LoadOptions opts = {});

/// Scenario for the configured cycle (loaded from cycle_path).
sim::ScenarioConfig make_scenario(const AppConfig& cfg);
sim::ScenarioConfig make_scenario(const AppConfig& cfg, cycle::DrivingCycle cycle);

/// Cycles the SOC predictor learns from. The configured cycle and the six
/// Tehran replicas are joined by `synthetic_count` seeded random specs.
std::vector<cycle::DrivingCycle> training_corpus(const AppConfig& cfg);

struct TrainingRun {
  predictor::Dataset dataset;
  predictor::RegressionModel model;
};

/// Fits the network to forced-EV SOC consumption from reference_soc over
/// every corpus window.
TrainingRun train_soc_predictor(const AppConfig& cfg);

}  // namespace phev::config
