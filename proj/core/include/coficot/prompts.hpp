#pragma once

#include <string>
#include <vector>

#include "coficot/types.hpp"

// Fixed prompt templates for the three chat-call kinds. The mock world
// parses these same shapes, so the exact header strings live here once.

namespace coficot::backends::prompts {

inline const std::string kSolverSystem =
    "You are a careful step-by-step problem solver. Work the problem one "
    "step at a time, numbering each step on its own line as \"Step N:\". "
    "After the final step, write the result on its own line as "
    "\"Answer: <final answer>\".";

inline const std::string kPredictSystem =
    "You are an expert Logic Complexity Evaluator. Your task is to estimate "
    "the reasoning depth required to solve a problem without generating the "
    "full solution.";

inline const std::string kVerifierSystem =
    "You are a strict solution verifier.";

inline const std::string kProblemHeader = "Problem:\n";
inline const std::string kInputProblemHeader = "Input Problem:\n";
inline const std::string kVerifiedHeader = "\n\nVerified steps so far:\n";
inline const std::string kFeedbackHeader = "\n\nFeedback:\n";
inline const std::string kContinueHeader = "\n\nContinue from Step ";
inline const std::string kCandidateStepsHeader = "\n\nCandidate steps:\n";
inline const std::string kRateHeader = "\n\nRate each step";
inline const std::string kPredictTaskHeader = "\n\nTask:\n";

inline std::string generation_user(const Question& q) { return q.body; }

inline std::string predict_user(const Question& q) {
  return "Definition of a Step:\n"
         "A step is defined as a distinct atomic reasoning operation, such "
         "as:\n"
         "- Extracting a specific variable or condition.\n"
         "- Performing a single arithmetic calculation.\n"
         "- Making a logical deduction or transition.\n\n" +
         kInputProblemHeader + q.body + kPredictTaskHeader +
         "Analyze the problem structure and predict the minimum number of "
         "steps required to the correct solution.\n\n"
         "Output Constraint:\n"
         "Do NOT output the reasoning process or the answer. Output ONLY a "
         "single integer representing the estimated step count (e.g., 5).";
}

inline std::string continuation_user(const Question& q,
                                     const std::vector<Step>& prefix,
                                     const std::string& feedback,
                                     int next_step_one_based) {
  std::string prefix_text;
  for (const auto& s : prefix) {
    if (!prefix_text.empty()) prefix_text += '\n';
    prefix_text += s.text;
  }
  if (prefix_text.empty()) prefix_text = "(none)";
  return kProblemHeader + q.body + kVerifiedHeader + prefix_text +
         kFeedbackHeader + feedback + kContinueHeader +
         std::to_string(next_step_one_based) +
         ". Rewrite that step correctly and regenerate every step after it. "
         "Do not repeat the verified steps. End with \"Answer: <final "
         "answer>\".";
}

inline std::string verifier_user(const Question& q,
                                 const std::vector<Step>& steps) {
  std::string listing;
  for (const auto& s : steps) {
    if (!listing.empty()) listing += '\n';
    listing += s.text;
  }
  return kProblemHeader + q.body + kCandidateStepsHeader + listing +
         kRateHeader + " from 0 (certainly wrong) to 10 (certainly correct). "
         "Reply with exactly " + std::to_string(steps.size()) +
         " integers separated by commas, in step order, and nothing else.";
}

}  // namespace coficot::backends::prompts
