#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "coficot/backends.hpp"
#include "coficot/config.hpp"
#include "coficot/metering.hpp"
#include "coficot/triage.hpp"
#include "coficot/types.hpp"

namespace coficot::refine {

/// Index of the first step scoring under tau, if any.
std::optional<std::size_t> locate_first_error(
    const std::vector<double>& step_scores, double tau);

struct CorrectionFeedback {
  int step_index = 0;  // 0-based index of the flagged step
  double prm_score = 0.0;
  std::string message;
};

/// Fixed feedback template: names the step 1-based (as the model sees it),
/// quotes its text verbatim, and states the score to two decimals.
CorrectionFeedback build_feedback(const Step& step, double score);

struct CorrectionOutcome {
  ReasoningTrace trace;
  BackendUsage usage;
  bool corrected = false;  // false: identity pass-through
};

/// One correction attempt for one trace: find the first flagged step, keep
/// the verified prefix verbatim, and regenerate that step plus the entire
/// suffix in a single backend call. Traces with no flagged step (or with
/// missing step scores) pass through unchanged, as do degenerate backend
/// replies. Transport failures propagate.
CorrectionOutcome correct_solution(const Question& q,
                                   const ReasoningTrace& trace,
                                   const PipelineConfig& cfg,
                                   backends::Backends& be, int iteration);

enum class SelectionMetric { OrmScore, MeanStepScore };

/// The k best traces of the pool by the selection metric. Because the
/// objective is a plain sum, this equals the exhaustive size-k subset
/// argmax. Ties: higher score first, then refined traces over initial ones,
/// then stable input order. Throws PoolTooSmall.
std::vector<ReasoningTrace> select_top_k(
    const std::vector<ReasoningTrace>& pool, std::size_t k,
    SelectionMetric metric = SelectionMetric::OrmScore);

struct IterationLog {
  std::size_t merged_pool_size = 0;
  std::vector<std::string> selected_ids;
  DifficultyVerdict verdict;
};

struct RefinementState {
  int iterations = 0;  // executed count; equals history.size()
  int iter_max = 0;    // frozen at loop entry
  bool exited_early = false;
  std::vector<ReasoningTrace> pool;
  std::vector<IterationLog> history;
};

/// The iterative correction loop for a non-Easy question: per iteration,
/// score steps, correct every trace (in parallel), merge refined traces with
/// the incoming pool, score newcomers, select the top k, and re-classify
/// with the cached step prediction. Exits as soon as a re-classification
/// says Easy. The iteration budget comes from the entry verdict and never
/// changes mid-loop. All usage is recorded into the ledger under the
/// correction / prm_eval / orm_eval stages.
RefinementState run_refinement_loop(const Question& q,
                                    std::vector<ReasoningTrace> r0,
                                    const DifficultyVerdict& verdict,
                                    const triage::Calibration& cal,
                                    const PipelineConfig& cfg,
                                    backends::Backends& be,
                                    metering::TokenLedger& ledger,
                                    std::optional<int> cached_steps);

}  // namespace coficot::refine
