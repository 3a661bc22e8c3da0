#pragma once

#include "lprox/sampler.hpp"
#include "lprox/serialize.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lprox {

/// Builds a simulator from its configuration object (keys other than "name").
using SimulatorFactory = std::function<Simulator(const Json& params)>;

/// Named simulator registry; ships linear, saturating, piecewise, quadratic
/// and process.
void register_simulator(const std::string& name, SimulatorFactory factory);
Simulator make_simulator(const Json& spec);
std::vector<std::string> simulator_names();

struct DesignSettings {
  int steps = 5;
  double step_size = 1.0;
  double tolerance = 0.0;
  std::string init = "sample";  // sample | gaussian
  double init_scale = 1.0;
};

struct TrainSettings {
  MlpScoreConfig mlp;
  int samples = 1000;
  std::shared_ptr<const ScoreField> data;  // analytic field the data is drawn from
};

struct CheckSettings {
  bool final_feasible = false;
  bool porosity_exact = false;
  std::optional<double> contraction_min_fraction;
  std::optional<double> design_max_ratio;  // mse[last] / mse[0]
};

struct RunConfig {
  std::string experiment = "run";
  std::uint64_t seed = 0;
  int chains = 1;
  int threads = 1;
  std::string output;
  SamplerConfig sampler;
  std::optional<DesignSettings> design;
  std::optional<TrainSettings> train;
  CheckSettings checks;
  /// The fully resolved document: every default and generated array spelled
  /// out. Loading it again yields an identical configuration.
  Json resolved;
  /// Paths of keys filled in by defaults.
  std::vector<std::string> defaults;
};

/// Command-line overrides applied on top of the document.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<std::string> output;
};

/// Parses and validates a configuration document (or a run manifest, whose
/// embedded config is used). Unknown keys are rejected with a suggestion.
RunConfig parse_config(const Json& doc, const ConfigOverrides& overrides = {});
RunConfig load_config(const std::string& path, const ConfigOverrides& overrides = {});

/// Levenshtein edit distance (used for key suggestions).
int edit_distance(const std::string& a, const std::string& b);

}  // namespace lprox
