#pragma once

#include <array>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coficot/answers.hpp"
#include "coficot/config.hpp"
#include "coficot/types.hpp"

namespace coficot::triage {

/// Step-count distribution of a calibration corpus with its tertile cut
/// points (nearest-rank quantiles at 0.33 and 0.67).
struct Calibration {
  std::vector<int> lengths;  // sorted ascending
  int t33 = 0;
  int t67 = 0;
};

/// Nearest-rank quantile: the ceil(p*n)-th smallest value.
int nearest_rank(const std::vector<int>& sorted, int percent);

/// Build tertile thresholds from raw step counts. Throws CalibrationTooSmall
/// below 10 counts.
Calibration build_calibration(std::vector<int> step_counts);

/// File format: "t33 <int>" and "t67 <int>" header lines, then one count per
/// line. Loading recomputes the quantiles and rejects a header that
/// disagrees with the body.
Calibration load_calibration_file(const std::string& path);
void save_calibration_file(const Calibration& cal, const std::string& path);

/// Shannon entropy in nats with 0*ln(0) = 0. Throws InvalidDistribution when
/// a probability is negative or the sum strays from 1 by more than 1e-9.
double shannon_entropy(const std::vector<double>& probs);

/// Entropy -> confidence C = logistic(alpha*(1-H)) and its label:
/// Easy above the upper threshold, Hard at or below the lower one.
std::pair<double, Difficulty> confidence_label(
    double entropy, double alpha, std::pair<double, double> thresholds);

/// Z-score of the majority cluster's mean quality against the whole
/// ensemble (population standard deviation; zero spread gives z = 0), with
/// its label: Easy at or above delta, Hard below zero.
std::pair<double, Difficulty> reliability_label(
    const std::vector<ReasoningTrace>& traces,
    const answers::AnswerCluster& majority, double delta);

/// Predicted step count against the calibration tertiles. An absent
/// prediction (parse fallback) maps to Medium.
Difficulty complexity_label(std::optional<int> n_steps, const Calibration& cal);

/// Combine the three labels under the configured strategy. Balanced uses the
/// weighted rank sum against the cut points; Pessimistic/Optimistic take the
/// max/min rank; Democratic takes the majority with three-way ties resolved
/// to Medium. The weighted rank sum is recorded for every strategy.
DifficultyVerdict synthesize_difficulty(Difficulty d1, Difficulty d2,
                                        Difficulty d3,
                                        const std::array<double, 3>& weights,
                                        std::pair<double, double> cuts,
                                        Strategy strategy);

/// Full coarse classification of a scored ensemble. Pure: the backend step
/// prediction is passed in (cached by the caller), so repeated calls with
/// identical inputs give identical verdicts.
DifficultyVerdict classify(const std::vector<ReasoningTrace>& traces,
                           std::optional<int> predicted_steps,
                           const Calibration& cal, const PipelineConfig& cfg);

/// Read-mostly cache of step predictions keyed by question id, shared by
/// concurrent workers so each question costs at most one prediction call.
class StepCountCache {
 public:
  std::optional<std::optional<int>> lookup(const std::string& qid) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(qid);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  void store(const std::string& qid, std::optional<int> n_steps) {
    std::lock_guard lock(mu_);
    map_.emplace(qid, n_steps);
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::optional<int>> map_;
};

}  // namespace coficot::triage
