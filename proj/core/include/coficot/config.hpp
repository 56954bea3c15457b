#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "coficot/types.hpp"

namespace coficot {

/// Two-stage sampling: start with k0 samples and escalate to the full k
/// only when the initial confidence falls below safety_confidence.
struct ProgressiveSampling {
  int k0 = 5;
  double safety_confidence = 0.9;

  bool operator==(const ProgressiveSampling&) const = default;
};

/// Every pipeline hyperparameter plus every gap-filling default, in one
/// serializable record. A fully-resolved copy is embedded in each run report.
struct PipelineConfig {
  int k = 40;                      // ensemble size
  double temperature = 0.8;        // sampling and correction temperature
  double alpha = 2.0;              // entropy-to-confidence scaling
  double delta = 0.5;              // consensus z-score threshold
  double tau_step = 0.5;           // step-level verification threshold
  std::array<double, 3> weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  int iter_max_medium = 2;
  int iter_max_hard = 3;
  std::pair<double, double> confidence_thresholds = {0.3, 0.6};
  std::pair<double, double> d_score_cuts = {5.0 / 3, 7.0 / 3};
  Strategy strategy = Strategy::Balanced;
  AblationMode ablation_mode = AblationMode::Full;
  std::optional<ProgressiveSampling> progressive_sampling;
  std::int64_t seed = 0;

  int iter_max_for(Difficulty d) const {
    return d == Difficulty::Hard ? iter_max_hard : iter_max_medium;
  }

  bool operator==(const PipelineConfig&) const = default;
};

/// Checks every invariant and normalizes weights to sum exactly 1 (within
/// 1e-12 the input is left untouched, so validation is idempotent).
/// Throws ConfigError naming the first violated field.
PipelineConfig validate_config(PipelineConfig cfg);

/// Flat key-value config document (JSON object, one level). Unknown keys are
/// a hard error so hyperparameter typos cannot pass silently; absent keys
/// take their defaults. The result is validated before return.
PipelineConfig load_config_file(const std::string& path);
PipelineConfig parse_config_json(const std::string& json_text);
std::string config_to_json(const PipelineConfig& cfg);

Strategy parse_strategy(const std::string& name);
AblationMode parse_ablation(const std::string& name);

}  // namespace coficot
