#include "coficot/backends.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include "coficot/answers.hpp"
#include "coficot/prompts.hpp"
#include "coficot/segmentation.hpp"
#include "coficot/util.hpp"

namespace coficot::backends {

namespace {
constexpr std::uint64_t kTagGenerate = 0xa1;
constexpr std::uint64_t kTagPredict = 0xa2;
constexpr std::uint64_t kTagCorrect = 0xa3;
constexpr std::uint64_t kTagVerify = 0xa4;

std::optional<long long> first_integer(const std::string& text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool sign = (c == '-' || c == '+') && i + 1 < text.size() &&
                std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (!sign && !std::isdigit(static_cast<unsigned char>(c))) continue;
    std::size_t j = i + (sign ? 1 : 0);
    long long v = 0;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
      v = v * 10 + (text[j] - '0');
      if (v > 1000000) v = 1000000;
      ++j;
    }
    return c == '-' ? -v : v;
  }
  return std::nullopt;
}

std::vector<long long> all_integers(const std::string& text) {
  std::vector<long long> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    bool sign = (c == '-' || c == '+') && i + 1 < text.size() &&
                std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (!sign && !std::isdigit(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t j = i + (sign ? 1 : 0);
    long long v = 0;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
      v = v * 10 + (text[j] - '0');
      if (v > 1000000) v = 1000000;
      ++j;
    }
    out.push_back(c == '-' ? -v : v);
    i = j;
  }
  return out;
}

std::string rstripped(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.pop_back();
  return s;
}
}  // namespace

TokenBucket::TokenBucket(double requests_per_second)
    : rate_(requests_per_second),
      capacity_(std::max(1.0, requests_per_second)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  for (;;) {
    double wait_s = 0.0;
    {
      std::lock_guard lock(mu_);
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_).count();
      last_ = now;
      tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait_s = (1.0 - tokens_) / rate_;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

double normalize_external_score(double raw) {
  if (raw > 0.0 && raw <= 1.0) return raw;
  return logistic(raw);
}

Backends::Backends(BackendSet set, BackendOptions options)
    : set_(std::move(set)), options_(options) {
  if (options_.requests_per_second > 0.0)
    bucket_ = std::make_unique<TokenBucket>(options_.requests_per_second);
}

void Backends::observe(const BackendUsage& usage) {
  observed_prompt_.fetch_add(usage.prompt_tokens);
  observed_completion_.fetch_add(usage.completion_tokens);
}

BackendUsage Backends::observed_total() const {
  return {observed_prompt_.load(), observed_completion_.load()};
}

ChatResponse Backends::chat_with_retries(ChatClient& client,
                                         const ChatRequest& req) {
  int delay = options_.retry.base_delay_ms;
  for (int attempt = 1;; ++attempt) {
    if (bucket_) bucket_->acquire();
    attempts_.fetch_add(1);
    try {
      return client.chat(req);
    } catch (const BackendUnavailable&) {
      if (attempt >= options_.retry.max_attempts) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
  }
}

ScoreResponse Backends::score_with_retries(ScoreClient& client,
                                           const ScoreRequest& req) {
  int delay = options_.retry.base_delay_ms;
  for (int attempt = 1;; ++attempt) {
    if (bucket_) bucket_->acquire();
    attempts_.fetch_add(1);
    try {
      return client.score(req);
    } catch (const BackendUnavailable&) {
      if (attempt >= options_.retry.max_attempts) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
  }
}

std::vector<TraceResult> Backends::generate_ensemble(const Question& q, int n,
                                                     double temperature,
                                                     int first_index) {
  if (n < 1) throw Error("ensemble size must be positive");
  std::vector<std::optional<TraceResult>> slots(static_cast<std::size_t>(n));
  std::vector<std::string> failures(static_cast<std::size_t>(n));

  parallel_for_index(static_cast<std::size_t>(n), options_.max_parallel,
                     [&](std::size_t i) {
    int index = first_index + static_cast<int>(i);
    try {
      ChatRequest req;
      req.messages = {{"system", prompts::kSolverSystem},
                      {"user", prompts::generation_user(q)}};
      req.temperature = temperature;
      req.n = 1;
      req.seed = derive_seed(options_.seed, q.id, kTagGenerate,
                             static_cast<std::uint64_t>(index));
      req.sample_index = index;
      ChatResponse resp = chat_with_retries(*set_.generator, req);
      if (resp.contents.empty())
        throw BackendUnavailable("chat reply carried no choices");

      ReasoningTrace t;
      t.trace_id = q.id + "#" + std::to_string(index);
      t.steps = segment_steps(resp.contents[0]);
      t.final_answer = answers::extract_final_answer(resp.contents[0]);
      t.origin_iteration = 0;
      t.generated_tokens = resp.usage.completion_tokens;
      observe(resp.usage);
      slots[i] = TraceResult{std::move(t), resp.usage};
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });

  std::vector<TraceResult> out;
  out.reserve(static_cast<std::size_t>(n));
  std::string first_failure;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i])
      out.push_back(std::move(*slots[i]));
    else if (first_failure.empty())
      first_failure = failures[i];
  }
  if (out.empty())
    throw BackendUnavailable("every ensemble sample failed: " + first_failure);
  if (out.size() < static_cast<std::size_t>(n))
    throw PartialEnsemble("ensemble incomplete (" +
                              std::to_string(out.size()) + "/" +
                              std::to_string(n) + "): " + first_failure,
                          std::move(out));
  return out;
}

CorrectionResult Backends::continue_from_prefix(const Question& q,
                                                const std::vector<Step>& prefix,
                                                const Step& flawed_step,
                                                const std::string& feedback,
                                                double temperature,
                                                std::uint64_t seed) {
  if (feedback.empty()) throw Error("correction feedback must not be empty");
  (void)flawed_step;  // quoted inside the feedback text

  ChatRequest req;
  req.messages = {{"system", prompts::kSolverSystem},
                  {"user", prompts::continuation_user(
                               q, prefix, feedback,
                               static_cast<int>(prefix.size()) + 1)}};
  req.temperature = temperature;
  req.n = 1;
  req.seed = mix_seed(seed, kTagCorrect);
  ChatResponse resp = chat_with_retries(*set_.generator, req);
  if (resp.contents.empty())
    throw BackendUnavailable("chat reply carried no choices");

  std::vector<Step> steps;
  try {
    steps = segment_steps(resp.contents[0]);
  } catch (const EmptyCompletion&) {
    throw DegenerateCompletion("correction reply was empty");
  }
  // Defensive: drop any echoed prefix steps so the contract "never returns
  // the prefix" holds even against a sloppy backend.
  std::size_t echoed = 0;
  while (echoed < steps.size() && echoed < prefix.size() &&
         rstripped(steps[echoed].text) == rstripped(prefix[echoed].text))
    ++echoed;
  if (echoed > 0) steps.erase(steps.begin(),
                              steps.begin() + static_cast<std::ptrdiff_t>(echoed));
  if (steps.empty())
    throw DegenerateCompletion("correction reply contained no new steps");
  for (std::size_t i = 0; i < steps.size(); ++i)
    steps[i].index = static_cast<int>(i);
  observe(resp.usage);
  return {std::move(steps), resp.usage};
}

std::pair<std::optional<int>, BackendUsage> Backends::predict_step_count(
    const Question& q) {
  BackendUsage total;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      ChatRequest req;
      req.messages = {{"system", prompts::kPredictSystem},
                      {"user", prompts::predict_user(q)}};
      req.temperature = 0.0;
      req.n = 1;
      req.seed = derive_seed(options_.seed, q.id, kTagPredict,
                             static_cast<std::uint64_t>(attempt));
      ChatResponse resp = chat_with_retries(*set_.generator, req);
      if (resp.contents.empty()) continue;
      observe(resp.usage);
      total += resp.usage;
      auto v = first_integer(resp.contents[0]);
      if (v && *v > 0)
        return {static_cast<int>(std::min<long long>(*v, 1000000)), total};
    } catch (const std::exception&) {
      // degrade to the sentinel below
    }
  }
  return {std::nullopt, total};
}

std::pair<double, BackendUsage> Backends::orm_score(
    const Question& q, const ReasoningTrace& trace) {
  if (trace.steps.empty()) throw Error("cannot score an empty trace");
  ScoreRequest req;
  req.question = q.body;
  req.solution = trace.text();
  ScoreResponse resp = score_with_retries(*set_.orm, req);
  if (!resp.score)
    throw BackendUnavailable("scorer returned no solution score");
  observe(resp.usage);
  return {normalize_external_score(*resp.score), resp.usage};
}

std::pair<std::vector<double>, BackendUsage> Backends::prm_score_steps(
    const Question& q, const ReasoningTrace& trace) {
  if (options_.ablation == AblationMode::OrmOnly)
    return prompted_verifier_scores(q, trace);
  if (trace.steps.empty()) throw Error("cannot score an empty trace");
  ScoreRequest req;
  req.question = q.body;
  std::vector<std::string> texts;
  texts.reserve(trace.steps.size());
  for (const auto& s : trace.steps) texts.push_back(s.text);
  req.steps = std::move(texts);
  ScoreResponse resp = score_with_retries(*set_.prm, req);
  if (!resp.step_scores)
    throw BackendUnavailable("scorer returned no step scores");
  if (resp.step_scores->size() != trace.steps.size())
    throw LengthMismatch("scorer returned " +
                         std::to_string(resp.step_scores->size()) +
                         " scores for " + std::to_string(trace.steps.size()) +
                         " steps");
  std::vector<double> scores;
  scores.reserve(resp.step_scores->size());
  for (double s : *resp.step_scores)
    scores.push_back(normalize_external_score(s));
  observe(resp.usage);
  return {std::move(scores), resp.usage};
}

std::pair<std::vector<double>, BackendUsage> Backends::prompted_verifier_scores(
    const Question& q, const ReasoningTrace& trace) {
  if (trace.steps.empty()) throw Error("cannot score an empty trace");
  ChatRequest req;
  req.messages = {{"system", prompts::kVerifierSystem},
                  {"user", prompts::verifier_user(q, trace.steps)}};
  req.temperature = 0.0;
  req.n = 1;
  req.seed = derive_seed(options_.seed, q.id, kTagVerify,
                         hash_text(trace.text()));
  ChatResponse resp = chat_with_retries(*set_.generator, req);
  if (resp.contents.empty())
    throw BackendUnavailable("chat reply carried no choices");
  auto ratings = all_integers(resp.contents[0]);
  if (ratings.size() != trace.steps.size())
    throw LengthMismatch("verifier rated " + std::to_string(ratings.size()) +
                         " steps out of " +
                         std::to_string(trace.steps.size()));
  std::vector<double> scores;
  scores.reserve(ratings.size());
  for (long long r : ratings)
    scores.push_back(std::clamp(static_cast<double>(r) / 10.0, 0.0, 1.0));
  observe(resp.usage);
  return {std::move(scores), resp.usage};
}

}  // namespace coficot::backends
