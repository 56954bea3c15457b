#include "coficot/triage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "coficot/errors.hpp"
#include "coficot/util.hpp"

namespace coficot::triage {

namespace {
// Guards label comparisons at cut points that are not exactly representable
// (for example a weighted rank sum meeting the default 5/3 cut).
constexpr double kCutEps = 1e-9;
}  // namespace

int nearest_rank(const std::vector<int>& sorted, int percent) {
  // ceil(percent*n/100) in exact integer arithmetic
  auto n = static_cast<long long>(sorted.size());
  long long rank = (percent * n + 99) / 100;
  if (rank < 1) rank = 1;
  return sorted[static_cast<std::size_t>(rank - 1)];
}

Calibration build_calibration(std::vector<int> step_counts) {
  if (step_counts.size() < 10) throw CalibrationTooSmall(step_counts.size());
  std::sort(step_counts.begin(), step_counts.end());
  Calibration cal;
  cal.lengths = std::move(step_counts);
  cal.t33 = nearest_rank(cal.lengths, 33);
  cal.t67 = nearest_rank(cal.lengths, 67);
  return cal;
}

Calibration load_calibration_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingCalibration("cannot open calibration file " + path);
  std::string key;
  int t33 = 0, t67 = 0;
  if (!(in >> key) || key != "t33" || !(in >> t33))
    throw MissingCalibration("calibration file " + path + ": bad t33 header");
  if (!(in >> key) || key != "t67" || !(in >> t67))
    throw MissingCalibration("calibration file " + path + ": bad t67 header");
  std::vector<int> lengths;
  int v = 0;
  while (in >> v) lengths.push_back(v);
  if (lengths.empty())
    throw MissingCalibration("calibration file " + path + ": no counts");
  std::sort(lengths.begin(), lengths.end());
  Calibration cal;
  cal.lengths = std::move(lengths);
  cal.t33 = nearest_rank(cal.lengths, 33);
  cal.t67 = nearest_rank(cal.lengths, 67);
  if (cal.t33 != t33 || cal.t67 != t67)
    throw MissingCalibration("calibration file " + path +
                             ": header disagrees with counts");
  return cal;
}

void save_calibration_file(const Calibration& cal, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write calibration file " + path);
  out << "t33 " << cal.t33 << "\n"
      << "t67 " << cal.t67 << "\n";
  for (int v : cal.lengths) out << v << "\n";
}

double shannon_entropy(const std::vector<double>& probs) {
  if (probs.empty()) throw InvalidDistribution("empty distribution");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InvalidDistribution("negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidDistribution("probabilities sum to " + std::to_string(sum));
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::pair<double, Difficulty> confidence_label(
    double entropy, double alpha, std::pair<double, double> thresholds) {
  double c = logistic(alpha * (1.0 - entropy));
  Difficulty d = c > thresholds.second  ? Difficulty::Easy
                 : c > thresholds.first ? Difficulty::Medium
                                        : Difficulty::Hard;
  return {c, d};
}

std::pair<double, Difficulty> reliability_label(
    const std::vector<ReasoningTrace>& traces,
    const answers::AnswerCluster& majority, double delta) {
  if (traces.empty()) throw EmptyEnsemble();
  double sum = 0.0;
  double maj_sum = 0.0;
  std::size_t maj_n = 0;
  for (const auto& t : traces) {
    double s = t.orm_score.value_or(0.0);
    sum += s;
    const std::string& ans = t.final_answer ? *t.final_answer : kUnanswered;
    if (ans == majority.canonical_answer) {
      maj_sum += s;
      ++maj_n;
    }
  }
  auto n = static_cast<double>(traces.size());
  double mean = sum / n;
  double var = 0.0;
  for (const auto& t : traces) {
    double d = t.orm_score.value_or(0.0) - mean;
    var += d * d;
  }
  double sd = std::sqrt(var / n);
  // spread at rounding-noise level counts as zero; dividing by it would
  // turn z into noise
  double z = 0.0;
  if (sd > 1e-12 && maj_n > 0)
    z = (maj_sum / static_cast<double>(maj_n) - mean) / sd;
  Difficulty d = z >= delta  ? Difficulty::Easy
                 : z >= 0.0 ? Difficulty::Medium
                            : Difficulty::Hard;
  return {z, d};
}

Difficulty complexity_label(std::optional<int> n_steps,
                            const Calibration& cal) {
  if (cal.lengths.empty()) throw MissingCalibration();
  if (!n_steps) return Difficulty::Medium;
  if (*n_steps <= cal.t33) return Difficulty::Easy;
  if (*n_steps > cal.t67) return Difficulty::Hard;
  return Difficulty::Medium;
}

DifficultyVerdict synthesize_difficulty(Difficulty d1, Difficulty d2,
                                        Difficulty d3,
                                        const std::array<double, 3>& weights,
                                        std::pair<double, double> cuts,
                                        Strategy strategy) {
  DifficultyVerdict v;
  v.confidence_label = d1;
  v.reliability_label = d2;
  v.complexity_label = d3;
  v.strategy = strategy;
  v.difficulty_score = weights[0] * rank(d1) + weights[1] * rank(d2) +
                       weights[2] * rank(d3);

  switch (strategy) {
    case Strategy::Balanced:
      v.final = v.difficulty_score < cuts.first - kCutEps ? Difficulty::Easy
                : v.difficulty_score >= cuts.second - kCutEps
                    ? Difficulty::Hard
                    : Difficulty::Medium;
      break;
    case Strategy::Pessimistic:
      v.final = std::max({d1, d2, d3}, [](Difficulty a, Difficulty b) {
        return rank(a) < rank(b);
      });
      break;
    case Strategy::Optimistic:
      v.final = std::min({d1, d2, d3}, [](Difficulty a, Difficulty b) {
        return rank(a) < rank(b);
      });
      break;
    case Strategy::Democratic: {
      int votes[3] = {0, 0, 0};
      ++votes[rank(d1) - 1];
      ++votes[rank(d2) - 1];
      ++votes[rank(d3) - 1];
      if (votes[0] >= 2)
        v.final = Difficulty::Easy;
      else if (votes[1] >= 2)
        v.final = Difficulty::Medium;
      else if (votes[2] >= 2)
        v.final = Difficulty::Hard;
      else
        v.final = Difficulty::Medium;  // three-way tie
      break;
    }
  }
  return v;
}

DifficultyVerdict classify(const std::vector<ReasoningTrace>& traces,
                           std::optional<int> predicted_steps,
                           const Calibration& cal, const PipelineConfig& cfg) {
  auto clusters = answers::cluster_solutions(traces);
  std::vector<double> probs;
  probs.reserve(clusters.size());
  for (const auto& c : clusters) probs.push_back(c.probability);

  double h = shannon_entropy(probs);
  auto [c, d1] = confidence_label(h, cfg.alpha, cfg.confidence_thresholds);
  auto [z, d2] =
      reliability_label(traces, answers::majority_cluster(clusters), cfg.delta);
  Difficulty d3 = complexity_label(predicted_steps, cal);

  DifficultyVerdict v = synthesize_difficulty(d1, d2, d3, cfg.weights,
                                              cfg.d_score_cuts, cfg.strategy);
  v.entropy = h;
  v.confidence = c;
  v.consensus_zscore = z;
  v.predicted_steps = predicted_steps;
  return v;
}

}  // namespace coficot::triage
