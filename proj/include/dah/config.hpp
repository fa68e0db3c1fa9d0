#pragma once

// Scenario configuration: a JSON key tree with a strict schema. Unknown keys
// are rejected and every model coefficient is either given or marked "fit".

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dah/competitors.hpp"
#include "dah/composite.hpp"

namespace dah {

/// Model keys accepted on the command line.
enum class ModelKey { DnC, ZABB, ZABeta, FlippedLogNormal, ZIFlippedPoisson, FlippedNB };

const char* model_key_name(ModelKey k);  // dnc, zabb, zab, flognormal, zifpoisson, fnb
ModelKey parse_model_key(const std::string& s);
std::vector<ModelKey> all_model_keys();
CompetitorKind competitor_kind(ModelKey k);  // throws ConfigError for DnC

struct ScenarioConfig {
  int u = 90;
  int ptilde = 4;
  DahDefinition definition = DahDefinition::DaysOutOfHospital;
  std::uint64_t seed = 20260516;
  unsigned threads = 0;
  std::string data;  // patient data path, components or trajectories
  std::string out_dir = "out";

  // Model coefficients are meaningful only for components not listed in `to_fit`.
  CompositeModel model = canonical_model();
  std::set<std::string> to_fit;  // "death", "protocol", "extended", "care"

  std::size_t simulate_n = 200;
  std::string simulate_format = "components";  // or "trajectories"
  CovariateProfile covariates;

  double gaic_k = 2.0;
  int restarts = 2;
  bool stepwise = false;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> candidates;

  int qq_B = 5000;
  int qq_grid = 250;

  std::vector<std::string> competitor_location_terms = {"age", "treatment", "bmi", "sex", "country"};
  std::vector<std::string> competitor_zero_terms;
  std::size_t control_fit_n = 5000;  // draws from the control scenario that competitor generators are fitted to

  double calibration_target = 2.0;
  double grid_from = -3.0, grid_to = 3.0, grid_step = 0.05;
  std::size_t calibration_sim_n = 200000;
  int refine_steps = 20;

  std::vector<int> n_grid;  // empty = default grid
  int reps = 10000;
  double alpha = 0.05;
  double allocation = 1.0;
  double target_power = 0.9;

  std::vector<ModelKey> models = {ModelKey::DnC};

  /// Components needed by simulation all carry coefficients.
  bool model_fully_specified() const { return to_fit.empty(); }
  /// Throws ConfigError if a value is out of range.
  void validate() const;
};

/// Parses and validates; throws ConfigError with the offending key path.
ScenarioConfig parse_config(const nlohmann::json& j);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Complete mirror of the effective configuration; parse_config(to_json(c))
/// reproduces c.
nlohmann::json to_json(const ScenarioConfig& c);

/// Model section in the config layout. Components in `to_fit` get "fit"
/// directives in place of coefficients.
nlohmann::json model_to_json(const CompositeModel& m, const std::set<std::string>& to_fit = {});
nlohmann::json component_to_json(const ComponentSpec& spec, bool fit = false);

/// Canonical text of a JSON value (sorted keys, no whitespace) and its hash.
std::string canonical_text(const nlohmann::json& j);
std::string config_hash(const ScenarioConfig& c);

}  // namespace dah
