#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coficot/config.hpp"
#include "coficot/errors.hpp"
#include "coficot/types.hpp"

namespace coficot::backends {

// ---------------------------------------------------------------------------
// Wire types. Field names mirror the JSON bodies exactly; the mock server
// speaks the same shapes, so the HTTP and in-process paths are interchangeable.
// ---------------------------------------------------------------------------

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int n = 1;
  std::uint64_t seed = 0;
  // Mock-only hint used by scripted fixtures to assign completions by
  // ensemble position; real endpoints ignore it.
  int sample_index = 0;
};

struct ChatResponse {
  std::vector<std::string> contents;  // one entry per requested choice
  BackendUsage usage;
};

struct ScoreRequest {
  std::string question;
  std::optional<std::string> solution;         // whole-solution scoring
  std::optional<std::vector<std::string>> steps;  // step-level scoring
};

struct ScoreResponse {
  std::optional<double> score;
  std::optional<std::vector<double>> step_scores;
  BackendUsage usage;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
};

class ScoreClient {
 public:
  virtual ~ScoreClient() = default;
  virtual ScoreResponse score(const ScoreRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Throttling and retries
// ---------------------------------------------------------------------------

/// Shared requests-per-second limiter. A non-positive rate disables it.
class TokenBucket {
 public:
  explicit TokenBucket(double requests_per_second);
  void acquire();

 private:
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_delay_ms = 25;  // doubled per failed attempt
};

/// Some ensemble samples failed after retries while others succeeded; the
/// caller decides whether to proceed with the survivors.
struct TraceResult {
  ReasoningTrace trace;
  BackendUsage usage;
};

struct PartialEnsemble : Error {
  PartialEnsemble(const std::string& detail, std::vector<TraceResult> partial)
      : Error(detail), partial(std::move(partial)) {}
  std::vector<TraceResult> partial;
};

/// Identity on scores already in (0,1]; anything else is read as a raw
/// model output and squashed through the logistic function.
double normalize_external_score(double raw);

struct BackendSet {
  std::shared_ptr<ChatClient> generator;
  std::shared_ptr<ScoreClient> orm;
  std::shared_ptr<ScoreClient> prm;
};

struct BackendOptions {
  AblationMode ablation = AblationMode::Full;
  RetryPolicy retry;
  double requests_per_second = 0.0;  // 0 = unlimited
  unsigned max_parallel = 8;
  std::uint64_t seed = 0;
};

struct CorrectionResult {
  std::vector<Step> steps;  // replacement step plus regenerated suffix
  BackendUsage usage;
};

// ---------------------------------------------------------------------------
// Facade over the three model roles. Owns prompt construction, response
// parsing, retries, rate limiting, and score normalization. Stateless per
// call apart from diagnostic counters, so concurrent use is safe.
// ---------------------------------------------------------------------------
class Backends {
 public:
  Backends(BackendSet set, BackendOptions options);

  /// n independent samples at the given temperature, segmented into steps
  /// with final answers extracted. first_index offsets the per-sample seed
  /// derivation so progressive escalation continues the same stream.
  /// Throws PartialEnsemble when only some samples survive retries and
  /// BackendUnavailable when none do.
  std::vector<TraceResult> generate_ensemble(const Question& q, int n,
                                             double temperature,
                                             int first_index = 0);

  /// One correction call: regenerates the flawed step and everything after
  /// it, conditioned on the verified prefix and the feedback text. Returned
  /// steps never include the prefix. Throws DegenerateCompletion when the
  /// reply contains no usable steps.
  CorrectionResult continue_from_prefix(const Question& q,
                                        const std::vector<Step>& prefix,
                                        const Step& flawed_step,
                                        const std::string& feedback,
                                        double temperature,
                                        std::uint64_t seed);

  /// Look-ahead step estimate. Parses the first integer of the reply, retries
  /// the call once on a parse failure, then degrades to an empty value that
  /// downstream classification treats as Medium. Never throws.
  std::pair<std::optional<int>, BackendUsage> predict_step_count(
      const Question& q);

  std::pair<double, BackendUsage> orm_score(const Question& q,
                                            const ReasoningTrace& trace);

  /// One score per step. Under the orm-only ablation the trained scorer is
  /// replaced by the prompted verifier below.
  std::pair<std::vector<double>, BackendUsage> prm_score_steps(
      const Question& q, const ReasoningTrace& trace);

  /// Step scores obtained by prompting the generator to rate each step 0-10.
  /// Throws LengthMismatch when the reply count disagrees with the trace.
  std::pair<std::vector<double>, BackendUsage> prompted_verifier_scores(
      const Question& q, const ReasoningTrace& trace);

  /// Every attempt made against any client, including retries.
  long total_attempts() const { return attempts_.load(); }

  /// Sum of every usage this facade has handed out; the independent side of
  /// the ledger-conservation check.
  BackendUsage observed_total() const;

  unsigned max_parallel() const { return options_.max_parallel; }

 private:
  ChatResponse chat_with_retries(ChatClient& client, const ChatRequest& req);
  ScoreResponse score_with_retries(ScoreClient& client,
                                   const ScoreRequest& req);
  void observe(const BackendUsage& usage);

  BackendSet set_;
  BackendOptions options_;
  std::unique_ptr<TokenBucket> bucket_;
  std::atomic<long> attempts_{0};
  std::atomic<long> observed_prompt_{0};
  std::atomic<long> observed_completion_{0};
};

// Factories for the HTTP transport; url is the full endpoint including path.
std::shared_ptr<ChatClient> make_http_chat_client(const std::string& url,
                                                  const std::string& api_key);
std::shared_ptr<ScoreClient> make_http_score_client(const std::string& url,
                                                    const std::string& api_key);

}  // namespace coficot::backends
