#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coficot/backends.hpp"
#include "coficot/metering.hpp"
#include "coficot/types.hpp"

namespace coficot::harness {

/// Arithmetic operation in a synthetic reasoning chain.
struct Operation {
  char kind = '+';  // '+', '-', or '*'
  long operand = 1;
};

/// Stochastic knobs attached to a task. All draws are content-seeded, so the
/// same trace always receives the same scores.
struct NoiseProfile {
  double amplitude = 0.05;     // uniform jitter added to model scores
  double orm_flip_prob = 0.0;  // chance the solution scorer inverts its tier
  double prm_flip_prob = 0.0;  // chance a step scorer inverts one step's tier
};

/// A generated arithmetic-chain task. The solver model for these tasks makes
/// an independent slip at each step with per_step_error_prob; slips poison
/// every later value, so the first inconsistent step is the first slip.
struct SyntheticTask {
  std::string id;
  Difficulty difficulty_class = Difficulty::Easy;  // generator intent only
  long start_value = 0;
  std::vector<Operation> operations;
  long true_answer = 0;
  double per_step_error_prob = 0.0;
  double correction_error_prob = 0.0;  // slip rate while regenerating
  double over_correction_prob = 0.0;   // chance a falsely flagged step is broken
  NoiseProfile noise;

  int chain_length() const { return static_cast<int>(operations.size()); }
};

/// One canned completion with its scorer tiers.
struct ScriptedEntry {
  std::string completion;
};

/// A canned continuation served when a correction is requested at a given
/// verified-prefix length. success_prob is drawn from the request seed.
struct ScriptedContinuation {
  double success_prob = 1.0;
  std::string success_text;
  std::string fail_text;
};

/// Fully scripted task: the ensemble is served round-robin by sample index,
/// step scores are low exactly on steps containing a flaw marker, and the
/// solution scorer keys on the final answer.
struct ScriptedTask {
  std::string id;
  std::string body;
  std::string answer;  // gold, already in canonical form
  std::vector<ScriptedEntry> ensemble;
  std::vector<std::string> flaw_markers;
  std::map<int, ScriptedContinuation> continuations;  // keyed by prefix length
  int predicted_steps = 5;
};

/// Deterministic stand-in for the three model endpoints. Thread safe; all
/// methods are const and derive their randomness from the request seed or
/// from content hashes.
class MockWorld {
 public:
  explicit MockWorld(std::uint64_t seed) : seed_(seed) {}

  void add_task(SyntheticTask task);
  void add_scripted(ScriptedTask task);

  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return order_.size(); }
  const std::vector<std::string>& ids() const { return order_; }

  const SyntheticTask* find_task(const std::string& id) const;
  const ScriptedTask* find_scripted(const std::string& id) const;

  /// Dataset view, in insertion order. Gold answers are included.
  std::vector<Question> questions() const;
  Question question_for(const std::string& id) const;

  /// Endpoint behaviors shared by the in-process clients and the HTTP server.
  backends::ChatResponse chat(const backends::ChatRequest& req) const;
  backends::ScoreResponse score_solution(const std::string& question,
                                         const std::string& solution) const;
  backends::ScoreResponse score_steps(
      const std::string& question, const std::vector<std::string>& steps) const;

  /// Grading oracle: does a canonical answer match the task's gold answer?
  bool is_correct(const std::string& id, const std::string& canonical) const;
  Difficulty class_of(const std::string& id) const;

 private:
  struct Resolved {
    const SyntheticTask* task = nullptr;
    const ScriptedTask* scripted = nullptr;
  };
  Resolved resolve_body(const std::string& body) const;

  backends::ChatResponse handle_generate(const std::string& body,
                                         const backends::ChatRequest& req) const;
  backends::ChatResponse handle_predict(const std::string& user,
                                        const backends::ChatRequest& req) const;
  backends::ChatResponse handle_continue(const std::string& user,
                                         const backends::ChatRequest& req) const;
  backends::ChatResponse handle_verify(const std::string& user) const;

  std::vector<double> step_score_values(const Resolved& r,
                                        const std::vector<std::string>& steps,
                                        bool for_verifier) const;

  std::uint64_t seed_;
  std::vector<std::string> order_;
  std::map<std::string, SyntheticTask> tasks_;
  std::map<std::string, ScriptedTask> scripted_;
  std::map<std::string, std::string> body_to_id_;
};

std::shared_ptr<backends::ChatClient> make_mock_chat_client(
    std::shared_ptr<const MockWorld> world);
std::shared_ptr<backends::ScoreClient> make_mock_orm_client(
    std::shared_ptr<const MockWorld> world);
std::shared_ptr<backends::ScoreClient> make_mock_prm_client(
    std::shared_ptr<const MockWorld> world);

/// Convenience: a full backend set talking to the world in process.
backends::BackendSet make_mock_backends(std::shared_ptr<const MockWorld> world);

/// Per-class corpus parameters. Length and slip-rate ranges overlap between
/// neighboring classes on purpose, so length-based triage is informative but
/// imperfect.
struct ClassProfile {
  int min_len = 2;
  int max_len = 4;
  double min_error = 0.02;
  double max_error = 0.08;
  double correction_error = 0.05;
  double over_correction = 0.0;
  NoiseProfile noise;
};

struct CorpusSpec {
  std::array<double, 3> mix{1.0 / 3, 1.0 / 3, 1.0 / 3};  // easy, medium, hard
  ClassProfile easy{2, 4, 0.02, 0.08, 0.05, 0.0, {}};
  ClassProfile medium{4, 8, 0.12, 0.30, 0.10, 0.0, {}};
  ClassProfile hard{7, 12, 0.30, 0.50, 0.10, 0.0, {}};
};

/// Deterministic task corpus. Class counts follow mix exactly (largest
/// remainder); task order interleaves the classes.
std::vector<SyntheticTask> make_corpus(std::uint64_t seed, int n,
                                       const CorpusSpec& spec = {});

/// Corpus with a single uniform profile, used for repair experiments.
std::vector<SyntheticTask> make_uniform_corpus(std::uint64_t seed, int n,
                                               int chain_length,
                                               double per_step_error_prob,
                                               const NoiseProfile& noise = {});

/// Serialization for corpora (one task per line; first line carries the
/// world seed).
void save_corpus_jsonl(const MockWorld& world, const std::string& path);
MockWorld load_corpus_jsonl(const std::string& path);

/// Case-study fixture: a counting question whose ensemble coalesces around a
/// wrong answer produced by a flawed middle step. Correction always succeeds.
ScriptedTask make_case_study_task();

/// Fixture whose initial pool triages Hard but converges after a single
/// round of corrections.
ScriptedTask make_convergent_hard_task();

enum class BaselineMethod { ScKway, BestOfK };

BaselineMethod parse_baseline_method(const std::string& name);
std::string to_string(BaselineMethod m);

struct BaselineRecord {
  std::string id;
  std::string answer;  // canonical
  std::optional<bool> correct;
  bool failed = false;
};

struct BaselineResult {
  std::vector<BaselineRecord> records;
  metering::RunSummary summary;
};

/// Non-adaptive reference methods over the same backends: k-sample majority
/// vote (ScKway) and highest-solution-score pick (BestOfK).
BaselineResult run_baseline(const std::vector<Question>& dataset,
                            backends::Backends& be, BaselineMethod method,
                            int k, double temperature, unsigned parallel,
                            metering::TokenLedger* ledger = nullptr);

/// Ablation of the corrector that discards chain state: only the flagged
/// step is replaced, the old suffix is kept verbatim.
ReasoningTrace stateless_replacement(const Question& q,
                                     const ReasoningTrace& trace,
                                     std::size_t flawed_index,
                                     const std::string& feedback,
                                     double temperature, std::uint64_t salt,
                                     backends::Backends& be);

}  // namespace coficot::harness
