#pragma once

#include <array>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "coficot/types.hpp"

namespace coficot::metering {

enum class Stage {
  Generation = 0,
  Classification = 1,
  PrmEval = 2,
  OrmEval = 3,
  Correction = 4,
};
inline constexpr int kStageCount = 5;

const char* to_string(Stage s);
Stage parse_stage(const std::string& name);  // throws UnknownStage

using StageUsage = std::array<BackendUsage, kStageCount>;

/// Thread-safe per-question, per-stage token accumulator. Every recorded
/// usage adds; nothing is ever overwritten, so the grand total equals the
/// sum of every BackendUsage observed during the run.
class TokenLedger {
 public:
  void record(const std::string& qid, Stage stage, const BackendUsage& usage);

  /// Count of ensemble samples actually generated for a question; feeds the
  /// effective-k metric of an adaptive run.
  void record_samples(const std::string& qid, long n);

  StageUsage usage_for(const std::string& qid) const;
  long samples_for(const std::string& qid) const;
  BackendUsage stage_total(Stage stage) const;
  BackendUsage grand_total() const;
  double effective_k() const;  // average samples per metered question
  std::vector<std::string> question_ids() const;

 private:
  struct Cell {
    StageUsage usage{};
    long samples = 0;
  };
  mutable std::mutex mu_;
  std::map<std::string, Cell> cells_;
};

/// Per-question outcome facts needed for the run summary, decoupled from the
/// full run record.
struct QuestionOutcome {
  std::string id;
  Difficulty routed = Difficulty::Medium;
  int iterations = 0;
  bool early_exit = false;
  std::optional<bool> correct;
  bool failed = false;
};

struct RunSummary {
  std::size_t questions = 0;
  std::size_t failed = 0;
  std::size_t graded = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // absent when nothing was graded
  BackendUsage total_usage;
  StageUsage stage_usage{};
  double effective_k = 0.0;
  std::array<std::size_t, 3> routed_counts{};    // Easy, Medium, Hard
  std::map<int, std::size_t> iteration_counts;   // iterations -> questions
  std::size_t early_exits = 0;
};

RunSummary summarize(const TokenLedger& ledger,
                     const std::vector<QuestionOutcome>& outcomes);

std::string summary_to_json(const RunSummary& s);

}  // namespace coficot::metering
