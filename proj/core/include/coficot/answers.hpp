#pragma once

#include <string>
#include <vector>

#include "coficot/types.hpp"

namespace coficot::answers {

/// One group of traces sharing a canonical final answer.
struct AnswerCluster {
  std::string canonical_answer;
  std::vector<std::string> member_trace_ids;  // in input trace order
  double reward_mass = 0.0;                   // sum of member quality scores
  double probability = 0.0;                   // reward_mass / total mass
};

/// Canonicalize a raw answer string: trim, lowercase, strip trailing
/// punctuation, then normalize numerics (drop thousands separators, a
/// trailing ".0" run and a leading "+") and reduce simple a/b fractions by
/// gcd. A bare multiple-choice letter, optionally wrapped in brackets,
/// becomes the single uppercase letter. Empty input maps to the
/// distinguished unanswered token. Idempotent.
std::string normalize_answer(const std::string& raw);

/// Pull the final answer out of a completion: the text after the last
/// "Answer:" (or "Final answer:") marker, normalized. No marker means the
/// trace is unanswered.
std::string extract_final_answer(const std::string& completion_text);

/// Partition traces by canonical answer. Every trace needs a quality score
/// and a final answer. Cluster probabilities are reward-mass shares; when
/// the total mass is zero they fall back to uniform. Clusters are returned
/// sorted by canonical answer so the result is independent of input order.
/// Throws EmptyEnsemble on an empty input.
std::vector<AnswerCluster> cluster_solutions(
    const std::vector<ReasoningTrace>& traces);

/// The cluster with the most members; ties prefer larger reward mass, then
/// the lexicographically smallest answer.
const AnswerCluster& majority_cluster(const std::vector<AnswerCluster>& cs);

/// Weighted self-consistency: the answer of the cluster with maximal reward
/// mass; ties prefer more members, then the lexicographically smallest
/// answer. Unanswered traces can only win when nothing else exists.
std::string weighted_vote(const std::vector<AnswerCluster>& clusters);

}  // namespace coficot::answers
