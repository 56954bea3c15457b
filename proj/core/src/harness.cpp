#include "coficot/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coficot/answers.hpp"
#include "coficot/errors.hpp"
#include "coficot/prompts.hpp"
#include "coficot/segmentation.hpp"
#include "coficot/util.hpp"

namespace coficot::harness {

using json = nlohmann::ordered_json;
namespace prompts = backends::prompts;

namespace {

// Purpose tags for content-seeded noise streams.
constexpr std::uint64_t kNoiseOrm = 0xb1;
constexpr std::uint64_t kNoisePrm = 0xb2;
constexpr std::uint64_t kNoiseVerify = 0xb3;

std::string op_text(const Operation& op) {
  switch (op.kind) {
    case '+':
      return "add " + std::to_string(op.operand);
    case '-':
      return "subtract " + std::to_string(op.operand);
    default:
      return "multiply by " + std::to_string(op.operand);
  }
}

long apply_op(const Operation& op, long value) {
  switch (op.kind) {
    case '+':
      return value + op.operand;
    case '-':
      return value - op.operand;
    default:
      return value * op.operand;
  }
}

/// A blunder value guaranteed to differ from the correct one. The first two
/// modes are systematic (inverted or skipped operation), so independent
/// slips at the same step tend to agree on the same wrong value and wrong
/// final answers form real clusters instead of dust.
long corrupted_value(const Operation& op, long prev, long correct,
                     Rng& rng) {
  switch (rng.range(0, 2)) {
    case 0: {
      Operation inverted = op;
      if (op.kind == '+') {
        inverted.kind = '-';
      } else if (op.kind == '-') {
        inverted.kind = '+';
      } else {
        inverted = Operation{'+', op.operand};
      }
      long v = apply_op(inverted, prev);
      if (v != correct) return v;
      break;
    }
    case 1: {
      if (prev != correct) return prev;
      break;
    }
    default:
      break;
  }
  long delta = rng.range(1, 5);
  if (rng.bernoulli(0.5)) delta = -delta;
  return correct + delta;
}

struct EmittedChain {
  std::string text;
  long final_value = 0;
};

/// Emit steps from_op..end starting at the given running value. Each line
/// names the intended operation but reports the (possibly slipped) running
/// value, and later values are computed from the slipped one, so a slip is
/// visible exactly where it was injected. The word count of the text does
/// not depend on the drawn values.
EmittedChain emit_chain(const SyntheticTask& t, std::size_t from_op,
                        long value, double slip_prob, Rng& rng,
                        std::optional<long> forced_first) {
  std::string out;
  for (std::size_t j = from_op; j < t.operations.size(); ++j) {
    const Operation& op = t.operations[j];
    long correct = apply_op(op, value);
    long next;
    if (j == from_op && forced_first.has_value()) {
      next = *forced_first;
    } else if (rng.bernoulli(slip_prob)) {
      next = corrupted_value(op, value, correct, rng);
    } else {
      next = correct;
    }
    out += "Step " + std::to_string(j + 1) + ": apply " + op_text(op) +
           "; value now " + std::to_string(next) + ".\n";
    value = next;
  }
  out += "Answer: " + std::to_string(value) + "\n";
  return {out, value};
}

std::string task_body(const SyntheticTask& t) {
  std::string ops;
  for (std::size_t i = 0; i < t.operations.size(); ++i) {
    if (i > 0) ops += ", ";
    ops += op_text(t.operations[i]);
  }
  return "Task " + t.id + ": start with " + std::to_string(t.start_value) +
         "; then apply: " + ops + "; report the final value.";
}

/// Substring between the end of `after` and the start of `before`; `before`
/// empty means up to the end. Throws when `after` is absent.
std::string slice_between(const std::string& text, const std::string& after,
                          const std::string& before, const char* what) {
  auto start = text.find(after);
  if (start == std::string::npos) {
    throw Error(std::string("malformed mock prompt: missing ") + what);
  }
  start += after.size();
  auto stop = before.empty() ? std::string::npos : text.find(before, start);
  if (stop == std::string::npos) return text.substr(start);
  return text.substr(start, stop - start);
}

std::optional<long> last_claimed_value(const std::string& text) {
  auto pos = text.rfind("value now ");
  if (pos == std::string::npos) return std::nullopt;
  std::size_t i = pos + 10;
  bool negative = false;
  if (i < text.size() && text[i] == '-') {
    negative = true;
    ++i;
  }
  long v = 0;
  bool any = false;
  while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
    v = v * 10 + (text[i] - '0');
    any = true;
    ++i;
  }
  if (!any) return std::nullopt;
  return negative ? -v : v;
}

int count_marker_lines(const std::string& text) {
  int n = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (is_step_marker_line(line)) ++n;
  }
  return n;
}

long message_tokens(const std::vector<backends::ChatMessage>& ms) {
  long n = 0;
  for (const auto& m : ms) n += count_tokens(m.content);
  return n;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

const backends::ChatMessage* last_user(const backends::ChatRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == "user") return &*it;
  }
  return nullptr;
}

const std::string* system_content(const backends::ChatRequest& req) {
  for (const auto& m : req.messages) {
    if (m.role == "system") return &m.content;
  }
  return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------
// World construction and lookup
// ---------------------------------------------------------------------------

void MockWorld::add_task(SyntheticTask task) {
  std::string body = task_body(task);
  if (tasks_.count(task.id) || scripted_.count(task.id)) {
    throw Error("duplicate mock task id: " + task.id);
  }
  body_to_id_[body] = task.id;
  order_.push_back(task.id);
  tasks_.emplace(task.id, std::move(task));
}

void MockWorld::add_scripted(ScriptedTask task) {
  if (tasks_.count(task.id) || scripted_.count(task.id)) {
    throw Error("duplicate mock task id: " + task.id);
  }
  if (task.ensemble.empty()) {
    throw Error("scripted task needs at least one completion: " + task.id);
  }
  body_to_id_[task.body] = task.id;
  order_.push_back(task.id);
  scripted_.emplace(task.id, std::move(task));
}

const SyntheticTask* MockWorld::find_task(const std::string& id) const {
  auto it = tasks_.find(id);
  return it == tasks_.end() ? nullptr : &it->second;
}

const ScriptedTask* MockWorld::find_scripted(const std::string& id) const {
  auto it = scripted_.find(id);
  return it == scripted_.end() ? nullptr : &it->second;
}

MockWorld::Resolved MockWorld::resolve_body(const std::string& body) const {
  auto it = body_to_id_.find(body);
  if (it == body_to_id_.end()) {
    throw UnknownQuestion(body.substr(0, std::min<std::size_t>(body.size(), 60)));
  }
  Resolved r;
  r.task = find_task(it->second);
  r.scripted = find_scripted(it->second);
  return r;
}

Question MockWorld::question_for(const std::string& id) const {
  Question q;
  q.id = id;
  if (const auto* t = find_task(id)) {
    q.body = task_body(*t);
    q.gold_answer = std::to_string(t->true_answer);
    return q;
  }
  if (const auto* s = find_scripted(id)) {
    q.body = s->body;
    q.gold_answer = s->answer;
    return q;
  }
  throw UnknownQuestion(id);
}

std::vector<Question> MockWorld::questions() const {
  std::vector<Question> out;
  out.reserve(order_.size());
  for (const auto& id : order_) out.push_back(question_for(id));
  return out;
}

bool MockWorld::is_correct(const std::string& id,
                           const std::string& canonical) const {
  Question q = question_for(id);
  return !canonical.empty() && canonical != kUnanswered &&
         canonical == answers::normalize_answer(q.gold_answer.value_or(""));
}

Difficulty MockWorld::class_of(const std::string& id) const {
  if (const auto* t = find_task(id)) return t->difficulty_class;
  if (find_scripted(id)) return Difficulty::Medium;
  throw UnknownQuestion(id);
}

// ---------------------------------------------------------------------------
// Chat endpoint
// ---------------------------------------------------------------------------

backends::ChatResponse MockWorld::chat(const backends::ChatRequest& req) const {
  const auto* user = last_user(req);
  if (user == nullptr) throw Error("mock chat request without a user message");
  const std::string* sys = system_content(req);

  backends::ChatResponse resp;
  if (sys != nullptr && *sys == prompts::kPredictSystem) {
    resp = handle_predict(user->content, req);
  } else if (sys != nullptr && *sys == prompts::kVerifierSystem) {
    resp = handle_verify(user->content);
  } else if (user->content.find(prompts::kContinueHeader) !=
             std::string::npos) {
    resp = handle_continue(user->content, req);
  } else {
    resp = handle_generate(user->content, req);
  }
  resp.usage.prompt_tokens = message_tokens(req.messages);
  long completion = 0;
  for (const auto& c : resp.contents) completion += count_tokens(c);
  resp.usage.completion_tokens = completion;
  return resp;
}

backends::ChatResponse MockWorld::handle_generate(
    const std::string& body, const backends::ChatRequest& req) const {
  Resolved r = resolve_body(body);
  backends::ChatResponse resp;
  int n = std::max(1, req.n);
  for (int i = 0; i < n; ++i) {
    if (r.scripted != nullptr) {
      const auto& ensemble = r.scripted->ensemble;
      std::size_t slot =
          (static_cast<std::size_t>(req.sample_index) + i) % ensemble.size();
      resp.contents.push_back(ensemble[slot].completion);
    } else {
      Rng rng(i == 0 ? req.seed : mix_seed(req.seed, i));
      resp.contents.push_back(
          emit_chain(*r.task, 0, r.task->start_value,
                     r.task->per_step_error_prob, rng, std::nullopt)
              .text);
    }
  }
  return resp;
}

backends::ChatResponse MockWorld::handle_predict(
    const std::string& user, const backends::ChatRequest& req) const {
  std::string body = slice_between(user, prompts::kInputProblemHeader,
                                   prompts::kPredictTaskHeader, "problem");
  Resolved r = resolve_body(body);
  backends::ChatResponse resp;
  if (r.scripted != nullptr) {
    resp.contents.push_back(std::to_string(r.scripted->predicted_steps));
    return resp;
  }
  Rng rng(req.seed);
  long jitter = rng.range(-1, 1);
  long n = std::max<long>(1, r.task->chain_length() + jitter);
  resp.contents.push_back(std::to_string(n));
  return resp;
}

backends::ChatResponse MockWorld::handle_continue(
    const std::string& user, const backends::ChatRequest& req) const {
  std::string body =
      slice_between(user, prompts::kProblemHeader, prompts::kVerifiedHeader,
                    "problem");
  std::string prefix_text =
      slice_between(user, prompts::kVerifiedHeader, prompts::kFeedbackHeader,
                    "verified prefix");
  std::string feedback =
      slice_between(user, prompts::kFeedbackHeader, prompts::kContinueHeader,
                    "feedback");
  Resolved r = resolve_body(body);
  int prefix_len =
      prefix_text == "(none)" ? 0 : count_marker_lines(prefix_text);

  backends::ChatResponse resp;
  if (r.scripted != nullptr) {
    auto it = r.scripted->continuations.find(prefix_len);
    if (it == r.scripted->continuations.end()) {
      throw Error("no scripted continuation at prefix length " +
                  std::to_string(prefix_len) + " for " + r.scripted->id);
    }
    Rng rng(req.seed);
    bool success = rng.bernoulli(it->second.success_prob);
    resp.contents.push_back(success ? it->second.success_text
                                    : it->second.fail_text);
    return resp;
  }

  const SyntheticTask& t = *r.task;
  std::size_t j = static_cast<std::size_t>(std::max(0, prefix_len));
  if (j >= t.operations.size()) j = t.operations.size() - 1;
  long state = t.start_value;
  if (auto claimed_prefix = last_claimed_value(prefix_text)) {
    state = *claimed_prefix;
  }
  long correct = apply_op(t.operations[j], state);
  std::optional<long> claimed = last_claimed_value(feedback);

  Rng rng(req.seed);
  long first;
  if (claimed.has_value() && *claimed == correct) {
    // The flagged step was actually fine. Re-deriving it sometimes talks the
    // solver out of a correct value, which is the over-correction hazard.
    first = rng.bernoulli(t.over_correction_prob)
                ? corrupted_value(t.operations[j], state, correct, rng)
                : correct;
  } else {
    first = rng.bernoulli(t.correction_error_prob)
                ? corrupted_value(t.operations[j], state, correct, rng)
                : correct;
  }
  resp.contents.push_back(
      emit_chain(t, j, state, t.correction_error_prob, rng, first).text);
  return resp;
}

backends::ChatResponse MockWorld::handle_verify(const std::string& user) const {
  std::string body = slice_between(user, prompts::kProblemHeader,
                                   prompts::kCandidateStepsHeader, "problem");
  std::string listing = slice_between(user, prompts::kCandidateStepsHeader,
                                      prompts::kRateHeader, "steps");
  Resolved r = resolve_body(body);
  std::vector<std::string> texts;
  for (const auto& step : segment_steps(listing)) {
    texts.push_back(step.text);
  }
  std::vector<double> values = step_score_values(r, texts, true);
  std::string reply;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) reply += ", ";
    reply += std::to_string(static_cast<int>(std::lround(values[i] * 10)));
  }
  backends::ChatResponse resp;
  resp.contents.push_back(reply);
  return resp;
}

// ---------------------------------------------------------------------------
// Score endpoints
// ---------------------------------------------------------------------------

backends::ScoreResponse MockWorld::score_solution(
    const std::string& question, const std::string& solution) const {
  Resolved r = resolve_body(question);
  std::string answer = answers::extract_final_answer(solution);

  double base;
  std::string task_id;
  NoiseProfile noise;
  if (r.scripted != nullptr) {
    task_id = r.scripted->id;
    base = (answer == answers::normalize_answer(r.scripted->answer)) ? 0.9
                                                                     : 0.1;
  } else {
    task_id = r.task->id;
    noise = r.task->noise;
    base = (answer == std::to_string(r.task->true_answer)) ? 0.9 : 0.1;
  }

  Rng rng(derive_seed(seed_, task_id, kNoiseOrm, hash_text(solution)));
  double v = base;
  if (rng.bernoulli(noise.orm_flip_prob)) v = 1.0 - v;
  v += (rng.real() * 2.0 - 1.0) * noise.amplitude;

  backends::ScoreResponse resp;
  resp.score = clamp01(v);
  resp.usage.prompt_tokens = count_tokens(question) + count_tokens(solution);
  resp.usage.completion_tokens = 1;
  return resp;
}

backends::ScoreResponse MockWorld::score_steps(
    const std::string& question, const std::vector<std::string>& steps) const {
  Resolved r = resolve_body(question);
  backends::ScoreResponse resp;
  resp.step_scores = step_score_values(r, steps, false);
  long prompt = count_tokens(question);
  for (const auto& s : steps) prompt += count_tokens(s);
  resp.usage.prompt_tokens = prompt;
  resp.usage.completion_tokens = static_cast<long>(steps.size());
  return resp;
}

std::vector<double> MockWorld::step_score_values(
    const Resolved& r, const std::vector<std::string>& steps,
    bool for_verifier) const {
  std::vector<double> out;
  out.reserve(steps.size());

  if (r.scripted != nullptr) {
    // Fixtures are exact: a step is bad iff it carries a flaw marker.
    for (const auto& text : steps) {
      bool flawed = false;
      for (const auto& marker : r.scripted->flaw_markers) {
        if (text.find(marker) != std::string::npos) {
          flawed = true;
          break;
        }
      }
      out.push_back(flawed ? 0.1 : 0.9);
    }
    return out;
  }

  const SyntheticTask& t = *r.task;
  long prev = t.start_value;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::optional<long> claimed = last_claimed_value(steps[i]);
    bool consistent = false;
    if (claimed.has_value() && i < t.operations.size()) {
      consistent = (*claimed == apply_op(t.operations[i], prev));
    }
    double base = consistent ? 0.9 : 0.1;

    std::uint64_t content = mix_seed(hash_text(steps[i]), i);
    if (for_verifier) {
      Rng rng(derive_seed(seed_, t.id, kNoiseVerify, content));
      long tens = std::lround(base * 10) + rng.range(-1, 1);
      out.push_back(clamp01(static_cast<double>(tens) / 10.0));
    } else {
      Rng rng(derive_seed(seed_, t.id, kNoisePrm, content));
      double v = base;
      if (rng.bernoulli(t.noise.prm_flip_prob)) v = 1.0 - v;
      v += (rng.real() * 2.0 - 1.0) * t.noise.amplitude;
      out.push_back(clamp01(v));
    }
    // Later steps are judged against the chain as written, so only the
    // first slip in a run of steps reads as inconsistent.
    if (claimed.has_value()) {
      prev = *claimed;
    } else if (i < t.operations.size()) {
      prev = apply_op(t.operations[i], prev);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// In-process clients
// ---------------------------------------------------------------------------

namespace {

class MockChatClient : public backends::ChatClient {
 public:
  explicit MockChatClient(std::shared_ptr<const MockWorld> world)
      : world_(std::move(world)) {}
  backends::ChatResponse chat(const backends::ChatRequest& req) override {
    return world_->chat(req);
  }

 private:
  std::shared_ptr<const MockWorld> world_;
};

class MockScoreClient : public backends::ScoreClient {
 public:
  MockScoreClient(std::shared_ptr<const MockWorld> world, bool step_level)
      : world_(std::move(world)), step_level_(step_level) {}

  backends::ScoreResponse score(const backends::ScoreRequest& req) override {
    if (step_level_) {
      if (!req.steps.has_value()) {
        throw Error("step scorer called without steps");
      }
      return world_->score_steps(req.question, *req.steps);
    }
    if (!req.solution.has_value()) {
      throw Error("solution scorer called without a solution");
    }
    return world_->score_solution(req.question, *req.solution);
  }

 private:
  std::shared_ptr<const MockWorld> world_;
  bool step_level_;
};

}  // namespace

std::shared_ptr<backends::ChatClient> make_mock_chat_client(
    std::shared_ptr<const MockWorld> world) {
  return std::make_shared<MockChatClient>(std::move(world));
}

std::shared_ptr<backends::ScoreClient> make_mock_orm_client(
    std::shared_ptr<const MockWorld> world) {
  return std::make_shared<MockScoreClient>(std::move(world), false);
}

std::shared_ptr<backends::ScoreClient> make_mock_prm_client(
    std::shared_ptr<const MockWorld> world) {
  return std::make_shared<MockScoreClient>(std::move(world), true);
}

backends::BackendSet make_mock_backends(
    std::shared_ptr<const MockWorld> world) {
  backends::BackendSet set;
  set.generator = make_mock_chat_client(world);
  set.orm = make_mock_orm_client(world);
  set.prm = make_mock_prm_client(world);
  return set;
}

// ---------------------------------------------------------------------------
// Corpus builders
// ---------------------------------------------------------------------------

namespace {

SyntheticTask draw_task(std::string id, Difficulty cls,
                        const ClassProfile& profile, Rng& rng) {
  SyntheticTask t;
  t.id = std::move(id);
  t.difficulty_class = cls;
  t.start_value = rng.range(-20, 20);
  int len = static_cast<int>(rng.range(profile.min_len, profile.max_len));
  t.operations.reserve(static_cast<std::size_t>(len));
  long value = t.start_value;
  for (int i = 0; i < len; ++i) {
    Operation op;
    switch (rng.range(0, 2)) {
      case 0:
        op = {'+', rng.range(1, 9)};
        break;
      case 1:
        op = {'-', rng.range(1, 9)};
        break;
      default:
        op = {'*', rng.range(2, 3)};
        break;
    }
    value = apply_op(op, value);
    t.operations.push_back(op);
  }
  t.true_answer = value;
  t.per_step_error_prob =
      profile.min_error + rng.real() * (profile.max_error - profile.min_error);
  t.correction_error_prob = profile.correction_error;
  t.over_correction_prob = profile.over_correction;
  t.noise = profile.noise;
  return t;
}

}  // namespace

std::vector<SyntheticTask> make_corpus(std::uint64_t seed, int n,
                                       const CorpusSpec& spec) {
  double mix_total = spec.mix[0] + spec.mix[1] + spec.mix[2];
  if (std::abs(mix_total - 1.0) > 1e-9) {
    throw Error("corpus mix proportions must sum to 1");
  }
  if (n <= 0) throw Error("corpus size must be positive");

  // Class counts by largest remainder, so exact thirds come out exact.
  std::array<int, 3> counts{};
  std::array<double, 3> remainders{};
  int assigned = 0;
  for (int c = 0; c < 3; ++c) {
    double exact = spec.mix[static_cast<std::size_t>(c)] * n;
    counts[static_cast<std::size_t>(c)] = static_cast<int>(exact);
    remainders[static_cast<std::size_t>(c)] =
        exact - counts[static_cast<std::size_t>(c)];
    assigned += counts[static_cast<std::size_t>(c)];
  }
  while (assigned < n) {
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (remainders[static_cast<std::size_t>(c)] >
          remainders[static_cast<std::size_t>(best)]) {
        best = c;
      }
    }
    ++counts[static_cast<std::size_t>(best)];
    remainders[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }

  const std::array<const ClassProfile*, 3> profiles{&spec.easy, &spec.medium,
                                                    &spec.hard};
  const std::array<Difficulty, 3> classes{Difficulty::Easy, Difficulty::Medium,
                                          Difficulty::Hard};

  Rng rng(mix_seed(seed, 0x636f7270));  // corpus stream
  std::vector<SyntheticTask> out;
  out.reserve(static_cast<std::size_t>(n));
  std::array<int, 3> used{};
  int index = 0;
  // Interleave classes so dataset order is not a class block structure.
  while (index < n) {
    for (int c = 0; c < 3 && index < n; ++c) {
      auto cu = static_cast<std::size_t>(c);
      if (used[cu] >= counts[cu]) continue;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "q%04d", index);
      out.push_back(draw_task(buf, classes[cu], *profiles[cu], rng));
      ++used[cu];
      ++index;
    }
  }
  return out;
}

std::vector<SyntheticTask> make_uniform_corpus(std::uint64_t seed, int n,
                                               int chain_length,
                                               double per_step_error_prob,
                                               const NoiseProfile& noise) {
  if (n <= 0 || chain_length <= 0) {
    throw Error("uniform corpus needs positive size and length");
  }
  ClassProfile profile;
  profile.min_len = chain_length;
  profile.max_len = chain_length;
  profile.min_error = per_step_error_prob;
  profile.max_error = per_step_error_prob;
  profile.correction_error = 0.0;
  profile.over_correction = 0.0;
  profile.noise = noise;

  Rng rng(mix_seed(seed, 0x756e6966));  // uniform stream
  std::vector<SyntheticTask> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "u%04d", i);
    out.push_back(draw_task(buf, Difficulty::Medium, profile, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus serialization
// ---------------------------------------------------------------------------

namespace {

json noise_to_json(const NoiseProfile& n) {
  return json{{"amplitude", n.amplitude},
              {"orm_flip_prob", n.orm_flip_prob},
              {"prm_flip_prob", n.prm_flip_prob}};
}

NoiseProfile noise_from_json(const json& j) {
  NoiseProfile n;
  n.amplitude = j.at("amplitude").get<double>();
  n.orm_flip_prob = j.at("orm_flip_prob").get<double>();
  n.prm_flip_prob = j.at("prm_flip_prob").get<double>();
  return n;
}

}  // namespace

void save_corpus_jsonl(const MockWorld& world, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open corpus file for writing: " + path);
  out << json{{"kind", "world"}, {"seed", world.seed()}}.dump() << '\n';
  for (const auto& id : world.ids()) {
    if (const auto* t = world.find_task(id)) {
      json ops = json::array();
      for (const auto& op : t->operations) {
        ops.push_back(json{{"kind", std::string(1, op.kind)},
                           {"operand", op.operand}});
      }
      out << json{{"kind", "chain"},
                  {"id", t->id},
                  {"class", to_string(t->difficulty_class)},
                  {"start_value", t->start_value},
                  {"operations", ops},
                  {"true_answer", t->true_answer},
                  {"per_step_error_prob", t->per_step_error_prob},
                  {"correction_error_prob", t->correction_error_prob},
                  {"over_correction_prob", t->over_correction_prob},
                  {"noise", noise_to_json(t->noise)}}
                 .dump()
          << '\n';
      continue;
    }
    const auto* s = world.find_scripted(id);
    json ensemble = json::array();
    for (const auto& e : s->ensemble) ensemble.push_back(e.completion);
    json continuations = json::array();
    for (const auto& [len, c] : s->continuations) {
      continuations.push_back(json{{"prefix_len", len},
                                   {"success_prob", c.success_prob},
                                   {"success_text", c.success_text},
                                   {"fail_text", c.fail_text}});
    }
    out << json{{"kind", "scripted"},
                {"id", s->id},
                {"body", s->body},
                {"answer", s->answer},
                {"ensemble", ensemble},
                {"flaw_markers", s->flaw_markers},
                {"continuations", continuations},
                {"predicted_steps", s->predicted_steps}}
               .dump()
        << '\n';
  }
}

MockWorld load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  std::string line;
  std::uint64_t seed = 0;
  bool have_world = false;
  std::optional<MockWorld> world;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("corpus parse error at line " + std::to_string(line_no) +
                  ": " + e.what());
    }
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "world") {
      seed = j.at("seed").get<std::uint64_t>();
      world.emplace(seed);
      have_world = true;
      continue;
    }
    if (!have_world) {
      throw Error("corpus file must start with a world line: " + path);
    }
    if (kind == "chain") {
      SyntheticTask t;
      t.id = j.at("id").get<std::string>();
      t.difficulty_class = parse_difficulty(j.at("class").get<std::string>());
      t.start_value = j.at("start_value").get<long>();
      for (const auto& op : j.at("operations")) {
        std::string k = op.at("kind").get<std::string>();
        if (k.size() != 1 || (k[0] != '+' && k[0] != '-' && k[0] != '*')) {
          throw Error("unknown operation kind in corpus: " + k);
        }
        t.operations.push_back({k[0], op.at("operand").get<long>()});
      }
      t.true_answer = j.at("true_answer").get<long>();
      t.per_step_error_prob = j.at("per_step_error_prob").get<double>();
      t.correction_error_prob = j.at("correction_error_prob").get<double>();
      t.over_correction_prob = j.at("over_correction_prob").get<double>();
      t.noise = noise_from_json(j.at("noise"));
      world->add_task(std::move(t));
    } else if (kind == "scripted") {
      ScriptedTask s;
      s.id = j.at("id").get<std::string>();
      s.body = j.at("body").get<std::string>();
      s.answer = j.at("answer").get<std::string>();
      for (const auto& c : j.at("ensemble")) {
        s.ensemble.push_back({c.get<std::string>()});
      }
      s.flaw_markers =
          j.at("flaw_markers").get<std::vector<std::string>>();
      for (const auto& c : j.at("continuations")) {
        ScriptedContinuation sc;
        sc.success_prob = c.at("success_prob").get<double>();
        sc.success_text = c.at("success_text").get<std::string>();
        sc.fail_text = c.at("fail_text").get<std::string>();
        s.continuations[c.at("prefix_len").get<int>()] = std::move(sc);
      }
      s.predicted_steps = j.at("predicted_steps").get<int>();
      world->add_scripted(std::move(s));
    } else {
      throw Error("unknown corpus row kind: " + kind);
    }
  }
  if (!have_world) throw Error("empty corpus file: " + path);
  return std::move(*world);
}

// ---------------------------------------------------------------------------
// Fixtures
// ---------------------------------------------------------------------------

ScriptedTask make_case_study_task() {
  ScriptedTask t;
  t.id = "case-study-arrangements";
  t.body =
      "Case study: how many distinct arrangements can be formed from the "
      "letters of the word APPLE?";
  t.answer = "60";
  t.predicted_steps = 6;
  t.flaw_markers = {"apply the n! formula"};

  const std::string shared_prefix =
      "Step 1: the word APPLE has 5 letters.\n"
      "Step 2: arrangements are counted with factorials.\n";
  const std::string wrong_main =
      shared_prefix +
      "Step 3: apply the n! formula: 5! = 120.\n"
      "Step 4: report the count: 120.\n"
      "Answer: 120\n";
  const std::string wrong_minor =
      shared_prefix +
      "Step 3: apply the n! formula to the distinct letters only: 4! = 24.\n"
      "Step 4: report the count: 24.\n"
      "Answer: 24\n";
  const std::string right =
      "Step 1: the word APPLE has 5 letters.\n"
      "Step 2: the letter P repeats twice, so divide by the repeats.\n"
      "Step 3: apply formula with repetitions: n! / k! = 5! / 2!.\n"
      "Step 4: compute 120 / 2 = 60.\n"
      "Answer: 60\n";

  // 30 copies of the dominant wrong solution, 6 correct, 4 of a second
  // blunder, interleaved so any prefix of the ensemble is representative.
  t.ensemble.assign(40, {wrong_main});
  for (int i : {0, 7, 14, 21, 28, 35}) {
    t.ensemble[static_cast<std::size_t>(i)] = {right};
  }
  for (int i : {3, 13, 23, 33}) {
    t.ensemble[static_cast<std::size_t>(i)] = {wrong_minor};
  }

  ScriptedContinuation fix;
  fix.success_prob = 1.0;
  fix.success_text =
      "Step 3: apply formula with repetitions: n! / k! = 5! / 2!.\n"
      "Step 4: compute 120 / 2 = 60.\n"
      "Answer: 60\n";
  fix.fail_text =
      "Step 3: apply the n! formula: 5! = 120.\n"
      "Step 4: report the count: 120.\n"
      "Answer: 120\n";
  t.continuations[2] = fix;
  return t;
}

ScriptedTask make_convergent_hard_task() {
  ScriptedTask t;
  t.id = "convergent-stack";
  t.body =
      "Stacking puzzle: count the stable stackings of the marked blocks.";
  t.answer = "9";
  t.predicted_steps = 5;
  t.flaw_markers = {"assume all blocks interchangeable",
                    "drop the balance condition", "count only left leans"};

  const std::string prefix =
      "Step 1: there are four marked blocks to stack.\n"
      "Step 2: stackings differ by order and lean.\n";
  const std::string right =
      prefix +
      "Step 3: enumerate the orders respecting weight.\n"
      "Step 4: three stable orders admit three leans each.\n"
      "Step 5: total stable stackings: 3 * 3 = 9.\n"
      "Answer: 9\n";
  const std::string wrong_a =
      prefix +
      "Step 3: assume all blocks interchangeable, so orders collapse.\n"
      "Step 4: four leans for each of three orders.\n"
      "Step 5: total stable stackings: 12.\n"
      "Answer: 12\n";
  const std::string wrong_b =
      prefix +
      "Step 3: drop the balance condition and keep every order.\n"
      "Step 4: five orders with three leans each.\n"
      "Step 5: total stable stackings: 15.\n"
      "Answer: 15\n";
  // 8 correct, 18 of one blunder, 14 of another: three real clusters with
  // the wrong one in the majority.
  t.ensemble.assign(40, {wrong_a});
  for (int i = 0; i < 40; i += 5) {
    t.ensemble[static_cast<std::size_t>(i)] = {right};
  }
  int placed = 0;
  for (int i = 1; i < 40 && placed < 14; i += 2) {
    if (i % 5 == 0) continue;
    t.ensemble[static_cast<std::size_t>(i)] = {wrong_b};
    ++placed;
  }

  ScriptedContinuation fix;
  fix.success_prob = 0.6;
  fix.success_text =
      "Step 3: enumerate the orders respecting weight.\n"
      "Step 4: three stable orders admit three leans each.\n"
      "Step 5: total stable stackings: 3 * 3 = 9.\n"
      "Answer: 9\n";
  fix.fail_text =
      "Step 3: count only left leans across the orders.\n"
      "Step 4: seven orders admit three left leans.\n"
      "Step 5: total stable stackings: 21.\n"
      "Answer: 21\n";
  t.continuations[2] = fix;
  return t;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

BaselineMethod parse_baseline_method(const std::string& name) {
  if (name == "sc") return BaselineMethod::ScKway;
  if (name == "best-of-k") return BaselineMethod::BestOfK;
  throw Error("unknown baseline method: " + name +
              " (expected sc or best-of-k)");
}

std::string to_string(BaselineMethod m) {
  return m == BaselineMethod::ScKway ? "sc" : "best-of-k";
}

BaselineResult run_baseline(const std::vector<Question>& dataset,
                            backends::Backends& be, BaselineMethod method,
                            int k, double temperature, unsigned parallel,
                            metering::TokenLedger* ledger) {
  if (k <= 0) throw Error("baseline sample count must be positive");
  metering::TokenLedger local;
  metering::TokenLedger& led = ledger != nullptr ? *ledger : local;

  BaselineResult result;
  result.records.resize(dataset.size());
  std::vector<metering::QuestionOutcome> outcomes(dataset.size());

  parallel_for_index(dataset.size(), parallel, [&](std::size_t qi) {
    const Question& q = dataset[qi];
    BaselineRecord rec;
    rec.id = q.id;
    metering::QuestionOutcome outcome;
    outcome.id = q.id;
    try {
      std::vector<backends::TraceResult> results;
      try {
        results = be.generate_ensemble(q, k, temperature);
      } catch (backends::PartialEnsemble& partial) {
        results = std::move(partial.partial);
      }
      std::vector<ReasoningTrace> traces;
      traces.reserve(results.size());
      for (auto& r : results) {
        led.record(q.id, metering::Stage::Generation, r.usage);
        traces.push_back(std::move(r.trace));
      }
      led.record_samples(q.id, static_cast<long>(traces.size()));

      if (method == BaselineMethod::ScKway) {
        // Unweighted majority: score every trace identically and vote.
        for (auto& tr : traces) tr.orm_score = 1.0;
        rec.answer = answers::weighted_vote(answers::cluster_solutions(traces));
      } else {
        std::size_t best = 0;
        double best_score = -1.0;
        for (std::size_t i = 0; i < traces.size(); ++i) {
          auto [score, usage] = be.orm_score(q, traces[i]);
          led.record(q.id, metering::Stage::OrmEval, usage);
          if (score > best_score) {
            best_score = score;
            best = i;
          }
        }
        rec.answer = traces.at(best).final_answer.value_or(kUnanswered);
      }
      if (q.gold_answer.has_value()) {
        rec.correct =
            (rec.answer == answers::normalize_answer(*q.gold_answer));
        outcome.correct = rec.correct;
      }
    } catch (const std::exception&) {
      rec.failed = true;
      rec.answer = kUnanswered;
      outcome.failed = true;
    }
    outcome.iterations = 0;
    result.records[qi] = std::move(rec);
    outcomes[qi] = std::move(outcome);
  });

  result.summary = metering::summarize(led, outcomes);
  return result;
}

ReasoningTrace stateless_replacement(const Question& q,
                                     const ReasoningTrace& trace,
                                     std::size_t flawed_index,
                                     const std::string& feedback,
                                     double temperature, std::uint64_t salt,
                                     backends::Backends& be) {
  if (flawed_index >= trace.steps.size()) {
    throw Error("flawed step index out of range");
  }
  std::vector<Step> prefix(trace.steps.begin(),
                           trace.steps.begin() +
                               static_cast<long>(flawed_index));
  auto corrected = be.continue_from_prefix(
      q, prefix, trace.steps[flawed_index], feedback, temperature, salt);

  ReasoningTrace out;
  out.trace_id = trace.trace_id + ".s";
  out.steps = prefix;
  // Keep only the replacement for the flagged step; everything after it is
  // the old suffix, recomputed state and all.
  out.steps.push_back(corrected.steps.front());
  for (std::size_t i = flawed_index + 1; i < trace.steps.size(); ++i) {
    out.steps.push_back(trace.steps[i]);
  }
  for (std::size_t i = 0; i < out.steps.size(); ++i) {
    out.steps[i].index = static_cast<int>(i);
  }
  out.origin_iteration = trace.origin_iteration + 1;
  out.generated_tokens = corrected.usage.completion_tokens;
  out.final_answer = answers::extract_final_answer(out.text());
  return out;
}

}  // namespace coficot::harness
