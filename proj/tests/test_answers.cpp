#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest/doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "coficot/answers.hpp"
#include "coficot/errors.hpp"
#include "coficot/types.hpp"
#include "coficot/util.hpp"

using namespace coficot;
using namespace coficot::answers;

namespace {

ReasoningTrace make_trace(const std::string& id, const std::string& answer,
                          double score) {
  ReasoningTrace t;
  t.trace_id = id;
  Step s;
  s.index = 0;
  s.text = "Step 1: claim\nAnswer: " + answer;
  t.steps.push_back(s);
  t.final_answer = normalize_answer(answer);
  t.orm_score = score;
  return t;
}

}  // namespace

TEST_CASE("normalization rules") {
  CHECK(normalize_answer(" 1,200.0 ") == "1200");
  CHECK(normalize_answer("3/6") == "1/2");
  CHECK(normalize_answer("(C)") == "C");
  CHECK(normalize_answer("c") == "C");
  CHECK(normalize_answer("[b]") == "B");
  CHECK(normalize_answer("42.") == "42");
  CHECK(normalize_answer("+5") == "5");
  CHECK(normalize_answer("-3.0") == "-3");
  CHECK(normalize_answer("Sixty apples") == "sixty apples");
  CHECK(normalize_answer("  TRUE!  ") == "true");
  CHECK(normalize_answer("10/4") == "5/2");
  CHECK(normalize_answer("") == kUnanswered);
  CHECK(normalize_answer("   ") == kUnanswered);
}

TEST_CASE("normalization is idempotent") {
  const std::vector<std::string> raws = {
      " 1,200.0 ", "3/6", "(C)", "42.", "+5", "Sixty", "", "0.50", "7/7",
      "x = 9", kUnanswered};
  for (const auto& raw : raws) {
    std::string once = normalize_answer(raw);
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("final answer extraction") {
  CHECK(extract_final_answer("Step 1: a\nAnswer: 60") == "60");
  CHECK(extract_final_answer("Answer: 10\nStep 2: b\nAnswer: 20") == "20");
  CHECK(extract_final_answer("Final answer: (c)") == "C");
  CHECK(extract_final_answer("no marker anywhere") == kUnanswered);
  CHECK(extract_final_answer("Answer:") == kUnanswered);
  CHECK(extract_final_answer("Step 1: answer: lurking\nAnswer: 7 ") == "7");
}

TEST_CASE("cluster probabilities are reward-mass shares") {
  std::vector<ReasoningTrace> traces = {
      make_trace("a", "60", 0.9), make_trace("b", "60", 0.8),
      make_trace("c", "120", 0.5), make_trace("d", "120", 0.4)};
  auto clusters = cluster_solutions(traces);
  REQUIRE(clusters.size() == 2);
  // clusters are sorted by canonical answer: "120" before "60"
  CHECK(clusters[0].canonical_answer == "120");
  CHECK(clusters[1].canonical_answer == "60");
  CHECK(clusters[0].reward_mass == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(clusters[1].reward_mass == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(clusters[0].probability == doctest::Approx(0.9 / 2.6).epsilon(1e-12));
  CHECK(clusters[1].probability == doctest::Approx(1.7 / 2.6).epsilon(1e-12));

  double total = 0.0;
  for (const auto& c : clusters) total += c.probability;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("single answer forms one certain cluster") {
  std::vector<ReasoningTrace> traces = {make_trace("a", "7", 0.2),
                                        make_trace("b", "7", 0.4)};
  auto clusters = cluster_solutions(traces);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].probability == doctest::Approx(1.0));
  CHECK(clusters[0].member_trace_ids.size() == 2);
}

TEST_CASE("zero total mass degenerates to uniform probabilities") {
  std::vector<ReasoningTrace> traces = {make_trace("a", "1", 0.0),
                                        make_trace("b", "2", 0.0),
                                        make_trace("c", "3", 0.0)};
  auto clusters = cluster_solutions(traces);
  REQUIRE(clusters.size() == 3);
  for (const auto& c : clusters) {
    CHECK(c.probability == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("empty ensemble throws") {
  CHECK_THROWS_AS(cluster_solutions({}), EmptyEnsemble);
}

TEST_CASE("clustering is a partition") {
  std::vector<ReasoningTrace> traces;
  Rng rng(99);
  const char* answers_pool[] = {"1", "2", "3", "4"};
  for (int i = 0; i < 40; ++i) {
    traces.push_back(make_trace("t" + std::to_string(i),
                                answers_pool[rng.range(0, 3)],
                                0.1 * static_cast<double>(rng.range(1, 9))));
  }
  auto clusters = cluster_solutions(traces);
  std::vector<std::string> seen;
  for (const auto& c : clusters) {
    for (const auto& id : c.member_trace_ids) seen.push_back(id);
  }
  CHECK(seen.size() == traces.size());
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("permutation invariance of probabilities and vote") {
  std::vector<ReasoningTrace> traces;
  Rng rng(7);
  const char* answers_pool[] = {"10", "20", "30"};
  for (int i = 0; i < 21; ++i) {
    traces.push_back(make_trace("t" + std::to_string(i),
                                answers_pool[rng.range(0, 2)],
                                rng.real()));
  }
  auto base = cluster_solutions(traces);
  std::string base_vote = weighted_vote(base);

  std::vector<ReasoningTrace> shuffled = traces;
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1],
              shuffled[static_cast<std::size_t>(rng.range(0, static_cast<long>(i) - 1))]);
  }
  auto perm = cluster_solutions(shuffled);
  REQUIRE(perm.size() == base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(perm[i].canonical_answer == base[i].canonical_answer);
    CHECK(perm[i].probability ==
          doctest::Approx(base[i].probability).epsilon(1e-12));
  }
  CHECK(weighted_vote(perm) == base_vote);
}

TEST_CASE("weighted vote picks maximal reward mass") {
  std::vector<ReasoningTrace> traces = {
      make_trace("a", "60", 0.9), make_trace("b", "60", 0.8),
      make_trace("c", "120", 0.5), make_trace("d", "120", 0.4)};
  CHECK(weighted_vote(cluster_solutions(traces)) == "60");
}

TEST_CASE("vote tie-break prefers more members then smaller answer") {
  // masses tie at 1.0; member counts 2 vs 3
  std::vector<ReasoningTrace> traces = {
      make_trace("a1", "5", 0.5), make_trace("a2", "5", 0.5),
      make_trace("b1", "6", 0.4), make_trace("b2", "6", 0.3),
      make_trace("b3", "6", 0.3)};
  CHECK(weighted_vote(cluster_solutions(traces)) == "6");

  // full tie on mass and count: lexicographically smallest answer
  std::vector<ReasoningTrace> tied = {make_trace("x", "9", 0.5),
                                      make_trace("y", "8", 0.5)};
  CHECK(weighted_vote(cluster_solutions(tied)) == "8");
}

TEST_CASE("vote is invariant under positive rescaling of scores") {
  std::vector<ReasoningTrace> traces;
  Rng rng(31);
  const char* answers_pool[] = {"5", "6", "7"};
  for (int i = 0; i < 15; ++i) {
    traces.push_back(make_trace("t" + std::to_string(i),
                                answers_pool[rng.range(0, 2)],
                                0.05 + 0.9 * rng.real()));
  }
  std::string before = weighted_vote(cluster_solutions(traces));
  for (auto& t : traces) t.orm_score = *t.orm_score * 0.37;
  CHECK(weighted_vote(cluster_solutions(traces)) == before);
}

TEST_CASE("unanswered traces never win unless alone") {
  std::vector<ReasoningTrace> traces = {make_trace("a", "", 0.9),
                                        make_trace("b", "", 0.9),
                                        make_trace("c", "41", 0.1)};
  CHECK(weighted_vote(cluster_solutions(traces)) == "41");

  std::vector<ReasoningTrace> only = {make_trace("a", "", 0.9)};
  CHECK(weighted_vote(cluster_solutions(only)) == kUnanswered);
}

TEST_CASE("majority cluster tie-breaking") {
  // count tie 2-2: larger reward mass wins
  std::vector<ReasoningTrace> traces = {
      make_trace("a1", "37", 0.9), make_trace("a2", "37", 0.9),
      make_trace("b1", "15", 0.2), make_trace("b2", "15", 0.2)};
  auto clusters = cluster_solutions(traces);
  CHECK(majority_cluster(clusters).canonical_answer == "37");

  // count and mass tie: smallest answer by byte order, not numeric value
  std::vector<ReasoningTrace> full_tie = {
      make_trace("a1", "14", 0.5), make_trace("a2", "14", 0.5),
      make_trace("b1", "9", 0.5), make_trace("b2", "9", 0.5)};
  auto tied = cluster_solutions(full_tie);
  CHECK(majority_cluster(tied).canonical_answer == "14");
}
