#include "coficot/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "coficot/answers.hpp"
#include "coficot/errors.hpp"
#include "coficot/refine.hpp"
#include "coficot/util.hpp"

namespace coficot::pipeline {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

std::vector<Question> load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetParseError(path, 0, "cannot open file");
  std::vector<Question> out;
  std::set<std::string> seen;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetParseError(path, line_no, e.what());
    }
    if (!row.is_object()) {
      throw DatasetParseError(path, line_no, "row is not an object");
    }
    Question q;
    try {
      q.id = row.at("id").get<std::string>();
      q.body = row.at("question").get<std::string>();
      if (row.contains("answer") && !row["answer"].is_null()) {
        q.gold_answer = row["answer"].get<std::string>();
      }
    } catch (const json::exception& e) {
      throw DatasetParseError(path, line_no, e.what());
    }
    if (q.id.empty()) throw DatasetParseError(path, line_no, "empty id");
    if (!seen.insert(q.id).second) {
      throw DatasetParseError(path, line_no, "duplicate id '" + q.id + "'");
    }
    out.push_back(std::move(q));
  }
  if (out.empty()) throw DatasetParseError(path, line_no, "no questions");
  return out;
}

void save_dataset_jsonl(const std::vector<Question>& dataset,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open dataset file for writing: " + path);
  for (const auto& q : dataset) {
    json row{{"id", q.id}, {"question", q.body}};
    if (q.gold_answer.has_value()) row["answer"] = *q.gold_answer;
    out << row.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

namespace {

long elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - since)
      .count();
}

/// Stage 0 for one question: sample the ensemble (progressively when
/// configured), score every trace with the solution scorer, and meter both.
/// Returns fully scored traces; throws when the backend fails outright.
std::vector<ReasoningTrace> stage0(const Question& q,
                                   const PipelineConfig& cfg,
                                   backends::Backends& be,
                                   metering::TokenLedger& ledger) {
  auto take_batch = [&](int n, int first_index) {
    std::vector<backends::TraceResult> results;
    try {
      results = be.generate_ensemble(q, n, cfg.temperature, first_index);
    } catch (backends::PartialEnsemble& partial) {
      results = std::move(partial.partial);
    }
    std::vector<ReasoningTrace> traces;
    traces.reserve(results.size());
    for (auto& r : results) {
      ledger.record(q.id, metering::Stage::Generation, r.usage);
      traces.push_back(std::move(r.trace));
    }
    return traces;
  };

  auto score_batch = [&](std::vector<ReasoningTrace>& traces) {
    std::vector<BackendUsage> usages(traces.size());
    std::vector<std::string> failures(traces.size());
    parallel_for_index(traces.size(), be.max_parallel(), [&](std::size_t i) {
      try {
        auto [score, usage] = be.orm_score(q, traces[i]);
        traces[i].orm_score = score;
        usages[i] = usage;
      } catch (const std::exception& e) {
        // Surfaced after the parallel region; workers must not throw.
        failures[i] = e.what();
      }
    });
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (!failures[i].empty()) {
        throw BackendUnavailable("solution scoring failed: " + failures[i]);
      }
      ledger.record(q.id, metering::Stage::OrmEval, usages[i]);
    }
  };

  std::vector<ReasoningTrace> traces;
  const auto& ps = cfg.progressive_sampling;
  if (ps.has_value() && ps->k0 < cfg.k) {
    traces = take_batch(ps->k0, 0);
    score_batch(traces);
    auto clusters = answers::cluster_solutions(traces);
    std::vector<double> probs;
    probs.reserve(clusters.size());
    for (const auto& c : clusters) probs.push_back(c.probability);
    double h = triage::shannon_entropy(probs);
    double confidence = logistic(cfg.alpha * (1.0 - h));
    if (confidence < ps->safety_confidence) {
      // Escalate: continue the same sample-seed stream past k0.
      auto more = take_batch(cfg.k - ps->k0, ps->k0);
      score_batch(more);
      for (auto& t : more) traces.push_back(std::move(t));
    }
  } else {
    traces = take_batch(cfg.k, 0);
    score_batch(traces);
  }
  ledger.record_samples(q.id, static_cast<long>(traces.size()));
  return traces;
}

struct Prepared {
  std::vector<ReasoningTrace> traces;
  bool failed = false;
  std::string failure;
  long wall_ms = 0;
};

}  // namespace

RunResult run(const std::vector<Question>& dataset, const RunOptions& opts,
              backends::Backends& be) {
  if (!opts.calibration.has_value() && !opts.calibrate_from_run) {
    throw MissingCalibration(
        "no calibration file given and --calibrate-from-run not set");
  }
  PipelineConfig cfg = validate_config(opts.cfg);

  metering::TokenLedger ledger;
  const std::size_t n = dataset.size();
  std::vector<Prepared> prepared(n);
  std::vector<RunRecord> records(n);

  auto stage0_one = [&](std::size_t i) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      prepared[i].traces = stage0(dataset[i], cfg, be, ledger);
    } catch (const std::exception& e) {
      prepared[i].failed = true;
      prepared[i].failure = e.what();
    } catch (...) {
      prepared[i].failed = true;
      prepared[i].failure = "unknown error";
    }
    prepared[i].wall_ms = elapsed_ms(t0);
  };

  auto finish_one = [&](std::size_t i, const triage::Calibration& cal) {
    const Question& q = dataset[i];
    RunRecord rec;
    rec.id = q.id;
    rec.wallclock_ms = prepared[i].wall_ms;
    auto t0 = std::chrono::steady_clock::now();
    if (prepared[i].failed) {
      rec.failed = true;
      rec.failure = prepared[i].failure;
      rec.answer = kUnanswered;
      if (q.gold_answer.has_value()) rec.correct = false;
      records[i] = std::move(rec);
      return;
    }
    try {
      auto [n_steps, predict_usage] = be.predict_step_count(q);
      ledger.record(q.id, metering::Stage::Classification, predict_usage);

      std::vector<ReasoningTrace> traces = std::move(prepared[i].traces);
      rec.verdict = triage::classify(traces, n_steps, cal, cfg);

      bool bypass =
          rec.verdict.final == Difficulty::Easy && !opts.force_refinement;
      if (bypass) {
        rec.answer =
            answers::weighted_vote(answers::cluster_solutions(traces));
      } else {
        DifficultyVerdict entry = rec.verdict;
        if (entry.final == Difficulty::Easy) {
          // Forced-refinement ablation: Easy items loop on the Medium budget.
          entry.final = Difficulty::Medium;
        }
        auto state = refine::run_refinement_loop(q, std::move(traces), entry,
                                                 cal, cfg, be, ledger,
                                                 n_steps);
        rec.answer =
            answers::weighted_vote(answers::cluster_solutions(state.pool));
        rec.iterations = state.iterations;
        rec.iter_max = state.iter_max;
        rec.early_exit = state.exited_early;
      }
      if (q.gold_answer.has_value()) {
        rec.correct =
            (rec.answer == answers::normalize_answer(*q.gold_answer));
      }
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.failure = e.what();
      rec.answer = kUnanswered;
      rec.correct.reset();
      if (q.gold_answer.has_value()) rec.correct = false;
    } catch (...) {
      rec.failed = true;
      rec.failure = "unknown error";
      rec.answer = kUnanswered;
      if (q.gold_answer.has_value()) rec.correct = false;
    }
    rec.wallclock_ms += elapsed_ms(t0);
    rec.usage = ledger.usage_for(q.id);
    rec.samples = ledger.samples_for(q.id);
    records[i] = std::move(rec);
  };

  triage::Calibration cal;
  if (opts.calibrate_from_run) {
    parallel_for_index(n, opts.parallel, stage0_one);
    std::vector<int> counts;
    for (const auto& p : prepared) {
      if (p.failed) continue;
      for (const auto& t : p.traces) {
        counts.push_back(static_cast<int>(t.steps.size()));
      }
    }
    cal = triage::build_calibration(std::move(counts));
    parallel_for_index(n, opts.parallel,
                       [&](std::size_t i) { finish_one(i, cal); });
  } else {
    cal = *opts.calibration;
    parallel_for_index(n, opts.parallel, [&](std::size_t i) {
      stage0_one(i);
      finish_one(i, cal);
    });
  }

  RunResult result;
  result.records = std::move(records);
  result.calibration = cal;
  std::vector<metering::QuestionOutcome> outcomes;
  outcomes.reserve(n);
  for (const auto& rec : result.records) {
    metering::QuestionOutcome o;
    o.id = rec.id;
    o.routed = rec.verdict.final;
    o.iterations = rec.iterations;
    o.early_exit = rec.early_exit;
    o.correct = rec.correct;
    o.failed = rec.failed;
    outcomes.push_back(std::move(o));
  }
  result.summary = metering::summarize(ledger, outcomes);
  result.backend_attempts = be.total_attempts();
  result.observed_total = be.observed_total();
  return result;
}

triage::Calibration calibrate(const std::vector<Question>& dataset,
                              const PipelineConfig& cfg_in,
                              backends::Backends& be, unsigned parallel) {
  PipelineConfig cfg = validate_config(cfg_in);
  std::vector<std::vector<int>> counts(dataset.size());
  parallel_for_index(dataset.size(), parallel, [&](std::size_t i) {
    try {
      std::vector<backends::TraceResult> results;
      try {
        results = be.generate_ensemble(dataset[i], cfg.k, cfg.temperature);
      } catch (backends::PartialEnsemble& partial) {
        results = std::move(partial.partial);
      }
      for (const auto& r : results) {
        counts[i].push_back(static_cast<int>(r.trace.steps.size()));
      }
    } catch (const std::exception&) {
      // A failed question contributes no counts; the size check below
      // decides whether enough survived.
    }
  });
  std::vector<int> flat;
  for (const auto& c : counts) flat.insert(flat.end(), c.begin(), c.end());
  return triage::build_calibration(std::move(flat));
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace {

json usage_json(const BackendUsage& u) {
  return json{{"prompt_tokens", u.prompt_tokens},
              {"completion_tokens", u.completion_tokens}};
}

BackendUsage usage_from_json(const json& j) {
  BackendUsage u;
  u.prompt_tokens = j.at("prompt_tokens").get<long>();
  u.completion_tokens = j.at("completion_tokens").get<long>();
  return u;
}

json verdict_json(const DifficultyVerdict& v) {
  json j;
  j["confidence_label"] = to_string(v.confidence_label);
  j["reliability_label"] = to_string(v.reliability_label);
  j["complexity_label"] = to_string(v.complexity_label);
  j["entropy"] = v.entropy;
  j["confidence"] = v.confidence;
  j["consensus_zscore"] = v.consensus_zscore;
  if (v.predicted_steps.has_value()) {
    j["predicted_steps"] = *v.predicted_steps;
  } else {
    j["predicted_steps"] = nullptr;
  }
  j["difficulty_score"] = v.difficulty_score;
  j["final"] = to_string(v.final);
  j["strategy"] = to_string(v.strategy);
  return j;
}

DifficultyVerdict verdict_from_json(const json& j) {
  DifficultyVerdict v;
  v.confidence_label =
      parse_difficulty(j.at("confidence_label").get<std::string>());
  v.reliability_label =
      parse_difficulty(j.at("reliability_label").get<std::string>());
  v.complexity_label =
      parse_difficulty(j.at("complexity_label").get<std::string>());
  v.entropy = j.at("entropy").get<double>();
  v.confidence = j.at("confidence").get<double>();
  v.consensus_zscore = j.at("consensus_zscore").get<double>();
  if (!j.at("predicted_steps").is_null()) {
    v.predicted_steps = j.at("predicted_steps").get<int>();
  }
  v.difficulty_score = j.at("difficulty_score").get<double>();
  v.final = parse_difficulty(j.at("final").get<std::string>());
  v.strategy = parse_strategy(j.at("strategy").get<std::string>());
  return v;
}

}  // namespace

std::string record_to_json_line(const RunRecord& r) {
  json j;
  j["id"] = r.id;
  j["verdict"] = verdict_json(r.verdict);
  j["iterations"] = r.iterations;
  j["iter_max"] = r.iter_max;
  j["early_exit"] = r.early_exit;
  j["answer"] = r.answer;
  if (r.correct.has_value()) {
    j["correct"] = *r.correct;
  } else {
    j["correct"] = nullptr;
  }
  j["samples"] = r.samples;
  json usage;
  for (int s = 0; s < metering::kStageCount; ++s) {
    usage[metering::to_string(static_cast<metering::Stage>(s))] =
        usage_json(r.usage[static_cast<std::size_t>(s)]);
  }
  j["usage"] = usage;
  j["failed"] = r.failed;
  j["failure"] = r.failure;
  j["wallclock_ms"] = r.wallclock_ms;
  return j.dump();
}

RunRecord record_from_json_line(const std::string& line) {
  json j = json::parse(line);
  RunRecord r;
  r.id = j.at("id").get<std::string>();
  r.verdict = verdict_from_json(j.at("verdict"));
  r.iterations = j.at("iterations").get<int>();
  r.iter_max = j.at("iter_max").get<int>();
  r.early_exit = j.at("early_exit").get<bool>();
  r.answer = j.at("answer").get<std::string>();
  if (!j.at("correct").is_null()) r.correct = j.at("correct").get<bool>();
  r.samples = j.at("samples").get<long>();
  for (int s = 0; s < metering::kStageCount; ++s) {
    r.usage[static_cast<std::size_t>(s)] = usage_from_json(
        j.at("usage").at(metering::to_string(static_cast<metering::Stage>(s))));
  }
  r.failed = j.at("failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  r.wallclock_ms = j.at("wallclock_ms").get<long>();
  return r;
}

void save_report_jsonl(const std::vector<RunRecord>& records,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open report file for writing: " + path);
  for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

std::vector<RunRecord> load_report_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report file: " + path);
  std::vector<RunRecord> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const std::exception& e) {
      throw Error("report parse error at " + path + ":" +
                  std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

ReportStats report_stats(const std::vector<RunRecord>& records) {
  ReportStats s;
  s.questions = records.size();
  for (const auto& r : records) {
    if (r.failed) ++s.failed;
    if (r.correct.has_value()) {
      ++s.graded;
      if (*r.correct) ++s.correct;
    }
    for (const auto& u : r.usage) {
      s.prompt_tokens += u.prompt_tokens;
      s.completion_tokens += u.completion_tokens;
    }
    ++s.routed[static_cast<std::size_t>(rank(r.verdict.final) - 1)];
    if (r.early_exit) ++s.early_exits;
  }
  s.total_tokens = s.prompt_tokens + s.completion_tokens;
  if (s.graded > 0) {
    s.accuracy = static_cast<double>(s.correct) /
                 static_cast<double>(s.graded);
  }
  if (s.correct > 0) {
    s.tokens_per_correct = static_cast<double>(s.total_tokens) /
                           static_cast<double>(s.correct);
  }
  return s;
}

Comparison compare(const std::vector<RunRecord>& a,
                   const std::vector<RunRecord>& b) {
  std::vector<std::string> ids_a, ids_b;
  ids_a.reserve(a.size());
  ids_b.reserve(b.size());
  for (const auto& r : a) ids_a.push_back(r.id);
  for (const auto& r : b) ids_b.push_back(r.id);
  std::sort(ids_a.begin(), ids_a.end());
  std::sort(ids_b.begin(), ids_b.end());
  if (ids_a != ids_b) {
    throw IdMismatch("reports cover different question ids");
  }

  Comparison c;
  c.a = report_stats(a);
  c.b = report_stats(b);
  if (c.a.accuracy.has_value() && c.b.accuracy.has_value()) {
    c.accuracy_delta = *c.a.accuracy - *c.b.accuracy;
  }
  c.token_delta = c.a.total_tokens - c.b.total_tokens;
  if (c.b.total_tokens != 0) {
    c.token_ratio = static_cast<double>(c.a.total_tokens) /
                    static_cast<double>(c.b.total_tokens);
  }
  c.completion_token_delta = c.a.completion_tokens - c.b.completion_tokens;
  if (c.b.completion_tokens != 0) {
    c.completion_token_ratio = static_cast<double>(c.a.completion_tokens) /
                               static_cast<double>(c.b.completion_tokens);
  }
  return c;
}

namespace {

json stats_json(const ReportStats& s) {
  json j;
  j["questions"] = s.questions;
  j["failed"] = s.failed;
  j["graded"] = s.graded;
  j["correct"] = s.correct;
  if (s.accuracy.has_value()) {
    j["accuracy"] = *s.accuracy;
  } else {
    j["accuracy"] = nullptr;
  }
  j["prompt_tokens"] = s.prompt_tokens;
  j["completion_tokens"] = s.completion_tokens;
  j["total_tokens"] = s.total_tokens;
  if (s.tokens_per_correct.has_value()) {
    j["tokens_per_correct"] = *s.tokens_per_correct;
  } else {
    j["tokens_per_correct"] = nullptr;
  }
  j["routed"] = json{{"easy", s.routed[0]},
                     {"medium", s.routed[1]},
                     {"hard", s.routed[2]}};
  j["early_exits"] = s.early_exits;
  return j;
}

}  // namespace

std::string comparison_to_json(const Comparison& c) {
  json j;
  j["a"] = stats_json(c.a);
  j["b"] = stats_json(c.b);
  if (c.accuracy_delta.has_value()) {
    j["accuracy_delta"] = *c.accuracy_delta;
  } else {
    j["accuracy_delta"] = nullptr;
  }
  j["token_delta"] = c.token_delta;
  if (c.token_ratio.has_value()) {
    j["token_ratio"] = *c.token_ratio;
  } else {
    j["token_ratio"] = nullptr;
  }
  j["completion_token_delta"] = c.completion_token_delta;
  if (c.completion_token_ratio.has_value()) {
    j["completion_token_ratio"] = *c.completion_token_ratio;
  } else {
    j["completion_token_ratio"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace coficot::pipeline
