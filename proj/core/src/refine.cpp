#include "coficot/refine.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "coficot/answers.hpp"
#include "coficot/errors.hpp"
#include "coficot/util.hpp"

namespace coficot::refine {

namespace {
constexpr std::uint64_t kTagCorrectionSeed = 0xc0;

bool fully_scored(const ReasoningTrace& t) {
  return std::all_of(t.steps.begin(), t.steps.end(),
                     [](const Step& s) { return s.prm_score.has_value(); });
}

double mean_step_score(const ReasoningTrace& t) {
  if (t.steps.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : t.steps) sum += s.prm_score.value_or(0.0);
  return sum / static_cast<double>(t.steps.size());
}
}  // namespace

std::optional<std::size_t> locate_first_error(
    const std::vector<double>& step_scores, double tau) {
  for (std::size_t i = 0; i < step_scores.size(); ++i)
    if (step_scores[i] < tau) return i;
  return std::nullopt;
}

CorrectionFeedback build_feedback(const Step& step, double score) {
  char score_text[16];
  std::snprintf(score_text, sizeof score_text, "%.2f", score);
  CorrectionFeedback f;
  f.step_index = step.index;
  f.prm_score = score;
  f.message = "Step " + std::to_string(step.index + 1) +
              " was scored " + score_text +
              " by the step verifier, below the acceptance threshold. The "
              "step read:\n\"" + step.text +
              "\"\nRewrite this step correctly and regenerate the solution "
              "from it onward.";
  return f;
}

CorrectionOutcome correct_solution(const Question& q,
                                   const ReasoningTrace& trace,
                                   const PipelineConfig& cfg,
                                   backends::Backends& be, int iteration) {
  CorrectionOutcome out;
  if (!fully_scored(trace)) {
    out.trace = trace;
    return out;
  }
  std::vector<double> scores;
  scores.reserve(trace.steps.size());
  for (const auto& s : trace.steps) scores.push_back(*s.prm_score);
  auto flawed = locate_first_error(scores, cfg.tau_step);
  if (!flawed) {
    out.trace = trace;
    return out;
  }

  const std::size_t j = *flawed;
  CorrectionFeedback feedback = build_feedback(trace.steps[j], scores[j]);
  std::vector<Step> prefix(trace.steps.begin(),
                           trace.steps.begin() + static_cast<std::ptrdiff_t>(j));
  std::uint64_t seed =
      derive_seed(static_cast<std::uint64_t>(cfg.seed), q.id,
                  kTagCorrectionSeed + static_cast<std::uint64_t>(iteration),
                  hash_text(trace.trace_id));
  backends::CorrectionResult result;
  try {
    result = be.continue_from_prefix(q, prefix, trace.steps[j],
                                     feedback.message, cfg.temperature, seed);
  } catch (const DegenerateCompletion&) {
    out.trace = trace;
    return out;
  } catch (const LengthMismatch&) {
    out.trace = trace;
    return out;
  }

  ReasoningTrace refined;
  refined.trace_id = trace.trace_id + ".r" + std::to_string(iteration);
  refined.steps = prefix;  // verbatim carry-over, scores included
  for (auto& s : result.steps) refined.steps.push_back(std::move(s));
  for (std::size_t i = 0; i < refined.steps.size(); ++i)
    refined.steps[i].index = static_cast<int>(i);
  refined.final_answer = answers::extract_final_answer(refined.text());
  refined.origin_iteration = iteration;
  refined.generated_tokens = result.usage.completion_tokens;
  out.trace = std::move(refined);
  out.usage = result.usage;
  out.corrected = true;
  return out;
}

std::vector<ReasoningTrace> select_top_k(
    const std::vector<ReasoningTrace>& pool, std::size_t k,
    SelectionMetric metric) {
  if (pool.size() < k) throw PoolTooSmall(pool.size(), k);
  std::vector<double> key(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (metric == SelectionMetric::OrmScore) {
      if (!pool[i].orm_score)
        throw Error("trace " + pool[i].trace_id + " has no quality score");
      key[i] = *pool[i].orm_score;
    } else {
      key[i] = mean_step_score(pool[i]);
    }
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     if (key[a] != key[b]) return key[a] > key[b];
                     return pool[a].refined() && !pool[b].refined();
                   });
  std::vector<ReasoningTrace> selected;
  selected.reserve(k);
  for (std::size_t i = 0; i < k; ++i) selected.push_back(pool[order[i]]);
  return selected;
}

RefinementState run_refinement_loop(const Question& q,
                                    std::vector<ReasoningTrace> r0,
                                    const DifficultyVerdict& verdict,
                                    const triage::Calibration& cal,
                                    const PipelineConfig& cfg,
                                    backends::Backends& be,
                                    metering::TokenLedger& ledger,
                                    std::optional<int> cached_steps) {
  RefinementState st;
  st.iter_max = cfg.iter_max_for(verdict.final);
  st.pool = std::move(r0);
  if (st.pool.empty()) throw EmptyEnsemble();
  const std::size_t k = st.pool.size();
  const bool prm_only = cfg.ablation_mode == AblationMode::PrmOnly;
  const auto metric = prm_only ? SelectionMetric::MeanStepScore
                               : SelectionMetric::OrmScore;

  // Attach step scores to any trace missing them; scorer failures leave the
  // trace unscored, which downgrades it to pass-through.
  auto ensure_step_scores = [&](std::vector<ReasoningTrace>& traces) {
    parallel_for_index(traces.size(), be.max_parallel(), [&](std::size_t i) {
      if (fully_scored(traces[i])) return;
      try {
        auto [scores, usage] = be.prm_score_steps(q, traces[i]);
        for (std::size_t s = 0; s < scores.size(); ++s)
          traces[i].steps[s].prm_score = scores[s];
        ledger.record(q.id, metering::Stage::PrmEval, usage);
      } catch (const std::exception&) {
        // scorer failure: the trace stays unscored and passes through
      }
    });
  };

  for (int t = 1; t <= st.iter_max; ++t) {
    ensure_step_scores(st.pool);

    // One correction attempt per trace, fanned out in parallel. A failing
    // correction passes the original through; it never aborts the iteration.
    std::vector<std::optional<CorrectionOutcome>> outcomes(st.pool.size());
    parallel_for_index(st.pool.size(), be.max_parallel(), [&](std::size_t i) {
      try {
        outcomes[i] = correct_solution(q, st.pool[i], cfg, be, t);
      } catch (const std::exception&) {
        outcomes[i] = std::nullopt;
      }
    });

    std::vector<ReasoningTrace> merged = st.pool;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (!outcomes[i] || !outcomes[i]->corrected) continue;
      ledger.record(q.id, metering::Stage::Correction, outcomes[i]->usage);
      merged.push_back(std::move(outcomes[i]->trace));
    }

    if (prm_only) {
      // The step scorer doubles as the quality score: mean step score.
      ensure_step_scores(merged);
      for (auto& trace : merged)
        if (!trace.orm_score) trace.orm_score = mean_step_score(trace);
    } else {
      parallel_for_index(merged.size(), be.max_parallel(), [&](std::size_t i) {
        if (merged[i].orm_score) return;
        try {
          auto [score, usage] = be.orm_score(q, merged[i]);
          merged[i].orm_score = score;
          ledger.record(q.id, metering::Stage::OrmEval, usage);
        } catch (const std::exception&) {
          // surfaced as BackendUnavailable below, outside the worker pool
        }
      });
      for (const auto& trace : merged)
        if (!trace.orm_score)
          throw BackendUnavailable("pool trace left unscored: " +
                                   trace.trace_id);
    }

    st.pool = select_top_k(merged, k, metric);
    DifficultyVerdict now = triage::classify(st.pool, cached_steps, cal, cfg);
    st.history.push_back({merged.size(), {}, now});
    auto& ids = st.history.back().selected_ids;
    ids.reserve(st.pool.size());
    for (const auto& trace : st.pool) ids.push_back(trace.trace_id);
    st.iterations = t;

    if (now.final == Difficulty::Easy) {
      st.exited_early = t < st.iter_max;
      break;
    }
  }
  return st;
}

}  // namespace coficot::refine
