#pragma once

#include <optional>
#include <string>
#include <vector>

namespace coficot {

/// One problem to solve. gold_answer is only consulted by the harness when
/// grading; the pipeline itself never reads it.
struct Question {
  std::string id;
  std::string body;
  std::optional<std::string> gold_answer;
};

/// One reasoning step of a candidate solution.
struct Step {
  int index = 0;  // 0-based, contiguous within a trace
  std::string text;
  std::optional<double> prm_score;  // in [0,1] when present
};

/// One candidate solution: ordered steps plus extracted answer and scores.
/// origin_iteration 0 means the trace came from the initial ensemble;
/// t >= 1 means it was produced by the correction loop at iteration t.
struct ReasoningTrace {
  std::string trace_id;
  std::vector<Step> steps;
  std::optional<std::string> final_answer;  // canonical form, "⊥" if unanswered
  std::optional<double> orm_score;          // in [0,1] when present
  int origin_iteration = 0;
  long generated_tokens = 0;

  bool refined() const { return origin_iteration > 0; }
  std::string text() const {
    std::string out;
    for (const auto& s : steps) {
      if (!out.empty()) out += '\n';
      out += s.text;
    }
    return out;
  }
};

enum class Difficulty { Easy, Medium, Hard };

/// Numeric rank of a difficulty label: Easy=1, Medium=2, Hard=3.
inline int rank(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return 1;
    case Difficulty::Medium: return 2;
    default: return 3;
  }
}

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    default: return "hard";
  }
}

Difficulty parse_difficulty(const std::string& name);  // throws on unknown

enum class Strategy { Balanced, Pessimistic, Optimistic, Democratic };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Balanced: return "balanced";
    case Strategy::Pessimistic: return "pessimistic";
    case Strategy::Optimistic: return "optimistic";
    default: return "democratic";
  }
}

enum class AblationMode { Full, OrmOnly, PrmOnly };

inline const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::Full: return "full";
    case AblationMode::OrmOnly: return "orm-only";
    default: return "prm-only";
  }
}

/// Outcome of the coarse classification stage: the three per-metric labels,
/// every intermediate statistic, and the synthesized routing label.
struct DifficultyVerdict {
  Difficulty confidence_label = Difficulty::Medium;   // from cluster entropy
  Difficulty reliability_label = Difficulty::Medium;  // from consensus z-score
  Difficulty complexity_label = Difficulty::Medium;   // from predicted depth
  double entropy = 0.0;
  double confidence = 0.0;
  double consensus_zscore = 0.0;
  std::optional<int> predicted_steps;  // empty when prediction fell back
  double difficulty_score = 0.0;       // weighted rank sum
  Difficulty final = Difficulty::Medium;
  Strategy strategy = Strategy::Balanced;
};

/// Token usage reported by one backend call.
struct BackendUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;

  BackendUsage& operator+=(const BackendUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  long total() const { return prompt_tokens + completion_tokens; }
};

inline BackendUsage operator+(BackendUsage a, const BackendUsage& b) {
  a += b;
  return a;
}

inline const std::string kUnanswered = "\xE2\x8A\xA5";  // "⊥"

}  // namespace coficot
