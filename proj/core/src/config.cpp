#include "coficot/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coficot/errors.hpp"

namespace coficot {

using nlohmann::ordered_json;

Difficulty parse_difficulty(const std::string& name) {
  if (name == "easy") return Difficulty::Easy;
  if (name == "medium") return Difficulty::Medium;
  if (name == "hard") return Difficulty::Hard;
  throw Error("unknown difficulty label: " + name);
}

Strategy parse_strategy(const std::string& name) {
  if (name == "balanced") return Strategy::Balanced;
  if (name == "pessimistic") return Strategy::Pessimistic;
  if (name == "optimistic") return Strategy::Optimistic;
  if (name == "democratic") return Strategy::Democratic;
  throw ConfigError("strategy", "unknown strategy '" + name + "'");
}

AblationMode parse_ablation(const std::string& name) {
  if (name == "full") return AblationMode::Full;
  if (name == "orm-only") return AblationMode::OrmOnly;
  if (name == "prm-only") return AblationMode::PrmOnly;
  throw ConfigError("ablation_mode", "unknown mode '" + name + "'");
}

PipelineConfig validate_config(PipelineConfig cfg) {
  if (cfg.k < 1) throw ConfigError("k", "must be a positive integer");
  if (!std::isfinite(cfg.temperature) || cfg.temperature < 0)
    throw ConfigError("temperature", "must be finite and non-negative");
  if (!std::isfinite(cfg.alpha)) throw ConfigError("alpha", "must be finite");
  if (!std::isfinite(cfg.delta) || cfg.delta <= 0)
    throw ConfigError("delta", "must be a positive threshold");
  if (!(cfg.tau_step > 0.0 && cfg.tau_step < 1.0))
    throw ConfigError("tau_step", "must lie in (0,1)");

  double wsum = 0.0;
  for (double w : cfg.weights) {
    if (!std::isfinite(w) || w < 0)
      throw ConfigError("weights", "must be non-negative");
    wsum += w;
  }
  if (wsum <= 0) throw ConfigError("weights", "must not all be zero");
  // Renormalize only when the sum is off; keeps validation idempotent.
  if (std::abs(wsum - 1.0) > 1e-12) {
    for (double& w : cfg.weights) w /= wsum;
  }

  if (cfg.iter_max_medium < 1)
    throw ConfigError("iter_max_medium", "must be positive");
  if (cfg.iter_max_hard < 1)
    throw ConfigError("iter_max_hard", "must be positive");

  if (!(cfg.confidence_thresholds.first < cfg.confidence_thresholds.second))
    throw ConfigError("confidence_thresholds", "must be strictly ordered");
  if (!(cfg.d_score_cuts.first <= cfg.d_score_cuts.second))
    throw ConfigError("d_score_cuts", "must be ordered");

  if (cfg.progressive_sampling) {
    const auto& ps = *cfg.progressive_sampling;
    if (ps.k0 < 1) throw ConfigError("progressive_sampling", "k0 must be positive");
    if (ps.k0 >= cfg.k)
      throw ConfigError("progressive_sampling", "k0 must be smaller than k");
    if (!(ps.safety_confidence > 0 && ps.safety_confidence <= 1))
      throw ConfigError("progressive_sampling",
                        "safety_confidence must lie in (0,1]");
  }
  return cfg;
}

namespace {

const std::set<std::string> kKnownKeys = {
    "k", "temperature", "alpha", "delta", "tau_step", "weights",
    "iter_max_medium", "iter_max_hard", "confidence_thresholds",
    "d_score_cuts", "strategy", "ablation_mode", "progressive_sampling",
    "seed"};

std::pair<double, double> read_pair(const ordered_json& j, const char* key) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError(key, "expected an array of two numbers");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

PipelineConfig parse_config_json(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config", "top level must be an object");

  for (const auto& [key, _] : doc.items()) {
    if (!kKnownKeys.count(key)) throw ConfigError(key, "unknown config key");
  }

  PipelineConfig cfg;
  try {
    if (doc.contains("k")) cfg.k = doc["k"].get<int>();
    if (doc.contains("temperature")) cfg.temperature = doc["temperature"].get<double>();
    if (doc.contains("alpha")) cfg.alpha = doc["alpha"].get<double>();
    if (doc.contains("delta")) cfg.delta = doc["delta"].get<double>();
    if (doc.contains("tau_step")) cfg.tau_step = doc["tau_step"].get<double>();
    if (doc.contains("weights")) {
      const auto& w = doc["weights"];
      if (!w.is_array() || w.size() != 3)
        throw ConfigError("weights", "expected an array of three numbers");
      for (int i = 0; i < 3; ++i) cfg.weights[i] = w[i].get<double>();
    }
    if (doc.contains("iter_max_medium"))
      cfg.iter_max_medium = doc["iter_max_medium"].get<int>();
    if (doc.contains("iter_max_hard"))
      cfg.iter_max_hard = doc["iter_max_hard"].get<int>();
    if (doc.contains("confidence_thresholds"))
      cfg.confidence_thresholds = read_pair(doc["confidence_thresholds"],
                                            "confidence_thresholds");
    if (doc.contains("d_score_cuts"))
      cfg.d_score_cuts = read_pair(doc["d_score_cuts"], "d_score_cuts");
    if (doc.contains("strategy"))
      cfg.strategy = parse_strategy(doc["strategy"].get<std::string>());
    if (doc.contains("ablation_mode"))
      cfg.ablation_mode = parse_ablation(doc["ablation_mode"].get<std::string>());
    if (doc.contains("progressive_sampling") &&
        !doc["progressive_sampling"].is_null()) {
      const auto& ps = doc["progressive_sampling"];
      if (!ps.is_object())
        throw ConfigError("progressive_sampling", "expected an object");
      ProgressiveSampling p;
      if (ps.contains("k0")) p.k0 = ps["k0"].get<int>();
      if (ps.contains("safety_confidence"))
        p.safety_confidence = ps["safety_confidence"].get<double>();
      for (const auto& [key, _] : ps.items()) {
        if (key != "k0" && key != "safety_confidence")
          throw ConfigError(key, "unknown progressive_sampling key");
      }
      cfg.progressive_sampling = p;
    }
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", e.what());
  }
  return validate_config(cfg);
}

PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str());
}

std::string config_to_json(const PipelineConfig& cfg) {
  ordered_json doc;
  doc["k"] = cfg.k;
  doc["temperature"] = cfg.temperature;
  doc["alpha"] = cfg.alpha;
  doc["delta"] = cfg.delta;
  doc["tau_step"] = cfg.tau_step;
  doc["weights"] = cfg.weights;
  doc["iter_max_medium"] = cfg.iter_max_medium;
  doc["iter_max_hard"] = cfg.iter_max_hard;
  doc["confidence_thresholds"] = {cfg.confidence_thresholds.first,
                                  cfg.confidence_thresholds.second};
  doc["d_score_cuts"] = {cfg.d_score_cuts.first, cfg.d_score_cuts.second};
  doc["strategy"] = to_string(cfg.strategy);
  doc["ablation_mode"] = to_string(cfg.ablation_mode);
  if (cfg.progressive_sampling) {
    doc["progressive_sampling"] = {
        {"k0", cfg.progressive_sampling->k0},
        {"safety_confidence", cfg.progressive_sampling->safety_confidence}};
  } else {
    doc["progressive_sampling"] = nullptr;
  }
  doc["seed"] = cfg.seed;
  return doc.dump();
}

}  // namespace coficot
