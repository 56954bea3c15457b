#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "coficot/backends.hpp"
#include "coficot/config.hpp"
#include "coficot/metering.hpp"
#include "coficot/triage.hpp"
#include "coficot/types.hpp"

namespace coficot::pipeline {

/// Dataset rows are JSONL objects {"id", "question", "answer"?}. Parse
/// problems abort with the offending line number.
std::vector<Question> load_dataset_jsonl(const std::string& path);
void save_dataset_jsonl(const std::vector<Question>& dataset,
                        const std::string& path);

/// Everything the run emits for one question.
struct RunRecord {
  std::string id;
  DifficultyVerdict verdict;
  int iterations = 0;
  int iter_max = 0;  // loop budget; 0 when the question bypassed the loop
  bool early_exit = false;
  std::string answer;  // canonical form
  std::optional<bool> correct;
  long samples = 0;
  metering::StageUsage usage{};
  bool failed = false;
  std::string failure;
  long wallclock_ms = 0;  // informational only, excluded from determinism
};

struct RunOptions {
  PipelineConfig cfg;
  std::optional<triage::Calibration> calibration;
  /// Build the calibration from this run's own initial ensembles (two-phase
  /// run) instead of requiring one up front.
  bool calibrate_from_run = false;
  unsigned parallel = 4;
  /// Ablation switch: disable the Easy bypass so every question goes
  /// through the correction loop (Easy budgets as Medium).
  bool force_refinement = false;
};

struct RunResult {
  std::vector<RunRecord> records;  // dataset order
  metering::RunSummary summary;
  triage::Calibration calibration;  // the thresholds actually used
  long backend_attempts = 0;        // every client call, retries included
  BackendUsage observed_total;      // facade-side conservation counter
};

/// Full adaptive run: sample an ensemble per question (optionally
/// progressively), score it, classify difficulty, route Easy questions
/// straight to the weighted vote and the rest through the correction loop,
/// then vote on the surviving pool. Per-question failures are recorded, not
/// fatal. Throws MissingCalibration when no calibration is available and
/// calibrate_from_run is off.
RunResult run(const std::vector<Question>& dataset, const RunOptions& opts,
              backends::Backends& be);

/// Initial-ensemble pass only: sample each question and collect solution
/// step counts into tertile thresholds. Throws CalibrationTooSmall.
triage::Calibration calibrate(const std::vector<Question>& dataset,
                              const PipelineConfig& cfg,
                              backends::Backends& be, unsigned parallel);

std::string record_to_json_line(const RunRecord& r);
RunRecord record_from_json_line(const std::string& line);
void save_report_jsonl(const std::vector<RunRecord>& records,
                       const std::string& path);
std::vector<RunRecord> load_report_jsonl(const std::string& path);

/// Aggregate view of one report, comparable across methods.
struct ReportStats {
  std::size_t questions = 0;
  std::size_t failed = 0;
  std::size_t graded = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;
  std::optional<double> tokens_per_correct;
  std::array<std::size_t, 3> routed{};  // Easy, Medium, Hard
  std::size_t early_exits = 0;
};

ReportStats report_stats(const std::vector<RunRecord>& records);

struct Comparison {
  ReportStats a;
  ReportStats b;
  std::optional<double> accuracy_delta;  // a - b, when both graded
  long token_delta = 0;                  // a - b, prompt + completion
  std::optional<double> token_ratio;     // a / b, when b nonzero
  long completion_token_delta = 0;       // a - b, decoded tokens only
  std::optional<double> completion_token_ratio;
};

/// Side-by-side stats for two reports over the same question ids (order
/// free). Throws IdMismatch otherwise.
Comparison compare(const std::vector<RunRecord>& a,
                   const std::vector<RunRecord>& b);
std::string comparison_to_json(const Comparison& c);

}  // namespace coficot::pipeline
