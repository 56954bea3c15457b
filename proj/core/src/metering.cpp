#include "coficot/metering.hpp"

#include <nlohmann/json.hpp>

#include "coficot/errors.hpp"

namespace coficot::metering {

using nlohmann::ordered_json;

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Generation: return "generation";
    case Stage::Classification: return "classification";
    case Stage::PrmEval: return "prm_eval";
    case Stage::OrmEval: return "orm_eval";
    case Stage::Correction: return "correction";
  }
  throw UnknownStage("stage enum out of range");
}

Stage parse_stage(const std::string& name) {
  for (int i = 0; i < kStageCount; ++i) {
    auto s = static_cast<Stage>(i);
    if (name == to_string(s)) return s;
  }
  throw UnknownStage("unknown stage name: " + name);
}

void TokenLedger::record(const std::string& qid, Stage stage,
                         const BackendUsage& usage) {
  auto idx = static_cast<int>(stage);
  if (idx < 0 || idx >= kStageCount)
    throw UnknownStage("stage enum out of range");
  std::lock_guard lock(mu_);
  cells_[qid].usage[static_cast<std::size_t>(idx)] += usage;
}

void TokenLedger::record_samples(const std::string& qid, long n) {
  std::lock_guard lock(mu_);
  cells_[qid].samples += n;
}

StageUsage TokenLedger::usage_for(const std::string& qid) const {
  std::lock_guard lock(mu_);
  auto it = cells_.find(qid);
  return it == cells_.end() ? StageUsage{} : it->second.usage;
}

long TokenLedger::samples_for(const std::string& qid) const {
  std::lock_guard lock(mu_);
  auto it = cells_.find(qid);
  return it == cells_.end() ? 0 : it->second.samples;
}

BackendUsage TokenLedger::stage_total(Stage stage) const {
  std::lock_guard lock(mu_);
  BackendUsage total;
  for (const auto& [_, cell] : cells_)
    total += cell.usage[static_cast<std::size_t>(stage)];
  return total;
}

BackendUsage TokenLedger::grand_total() const {
  std::lock_guard lock(mu_);
  BackendUsage total;
  for (const auto& [_, cell] : cells_)
    for (const auto& u : cell.usage) total += u;
  return total;
}

double TokenLedger::effective_k() const {
  std::lock_guard lock(mu_);
  if (cells_.empty()) return 0.0;
  long samples = 0;
  for (const auto& [_, cell] : cells_) samples += cell.samples;
  return static_cast<double>(samples) / static_cast<double>(cells_.size());
}

std::vector<std::string> TokenLedger::question_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  ids.reserve(cells_.size());
  for (const auto& [id, _] : cells_) ids.push_back(id);
  return ids;
}

RunSummary summarize(const TokenLedger& ledger,
                     const std::vector<QuestionOutcome>& outcomes) {
  RunSummary s;
  s.questions = outcomes.size();
  for (const auto& o : outcomes) {
    if (o.failed) {
      ++s.failed;
      continue;
    }
    if (o.correct) {
      ++s.graded;
      if (*o.correct) ++s.correct;
    }
    ++s.routed_counts[static_cast<std::size_t>(rank(o.routed) - 1)];
    ++s.iteration_counts[o.iterations];
    if (o.early_exit) ++s.early_exits;
  }
  if (s.graded > 0)
    s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.graded);
  for (int i = 0; i < kStageCount; ++i) {
    s.stage_usage[static_cast<std::size_t>(i)] =
        ledger.stage_total(static_cast<Stage>(i));
    s.total_usage += s.stage_usage[static_cast<std::size_t>(i)];
  }
  s.effective_k = ledger.effective_k();
  return s;
}

std::string summary_to_json(const RunSummary& s) {
  ordered_json doc;
  doc["questions"] = s.questions;
  doc["failed"] = s.failed;
  doc["graded"] = s.graded;
  doc["correct"] = s.correct;
  if (s.accuracy)
    doc["accuracy"] = *s.accuracy;
  else
    doc["accuracy"] = nullptr;
  doc["total_tokens"] = {{"prompt", s.total_usage.prompt_tokens},
                         {"completion", s.total_usage.completion_tokens},
                         {"total", s.total_usage.total()}};
  ordered_json stages;
  for (int i = 0; i < kStageCount; ++i) {
    const auto& u = s.stage_usage[static_cast<std::size_t>(i)];
    stages[to_string(static_cast<Stage>(i))] = {
        {"prompt", u.prompt_tokens}, {"completion", u.completion_tokens}};
  }
  doc["stage_tokens"] = stages;
  doc["effective_k"] = s.effective_k;
  doc["routed"] = {{"easy", s.routed_counts[0]},
                   {"medium", s.routed_counts[1]},
                   {"hard", s.routed_counts[2]}};
  ordered_json iters = ordered_json::object();
  for (const auto& [n, count] : s.iteration_counts)
    iters[std::to_string(n)] = count;
  doc["iterations"] = iters;
  doc["early_exits"] = s.early_exits;
  return doc.dump();
}

}  // namespace coficot::metering
