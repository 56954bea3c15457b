#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest/doctest.h>

#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "coficot/errors.hpp"
#include "coficot/metering.hpp"

using namespace coficot;
using namespace coficot::metering;

TEST_CASE("usage accumulates additively") {
  TokenLedger ledger;
  ledger.record("q1", Stage::Generation, {10, 20});
  ledger.record("q1", Stage::Generation, {10, 20});
  auto usage = ledger.usage_for("q1");
  CHECK(usage[static_cast<int>(Stage::Generation)].prompt_tokens == 20);
  CHECK(usage[static_cast<int>(Stage::Generation)].completion_tokens == 40);
  CHECK(usage[static_cast<int>(Stage::Generation)].total() == 60);
  for (int s = 1; s < kStageCount; ++s) {
    CHECK(usage[s].prompt_tokens == 0);
    CHECK(usage[s].completion_tokens == 0);
  }
}

TEST_CASE("empty ledger is the zero element") {
  TokenLedger ledger;
  CHECK(ledger.grand_total().prompt_tokens == 0);
  CHECK(ledger.grand_total().completion_tokens == 0);
  CHECK(ledger.effective_k() == 0.0);
  CHECK(ledger.question_ids().empty());
  auto usage = ledger.usage_for("never_seen");
  for (int s = 0; s < kStageCount; ++s) CHECK(usage[s].total() == 0);
  CHECK(ledger.samples_for("never_seen") == 0);
}

TEST_CASE("stage names round trip") {
  for (int s = 0; s < kStageCount; ++s) {
    Stage stage = static_cast<Stage>(s);
    CHECK(parse_stage(to_string(stage)) == stage);
  }
  CHECK(std::string(to_string(Stage::Generation)) == "generation");
  CHECK(std::string(to_string(Stage::PrmEval)) == "prm_eval");
  CHECK_THROWS_AS(parse_stage("verification"), UnknownStage);
  CHECK_THROWS_AS(parse_stage(""), UnknownStage);
  CHECK_THROWS_AS(parse_stage("Generation"), UnknownStage);
}

TEST_CASE("concurrent recording loses nothing") {
  TokenLedger ledger;
  const int workers = 8;
  const int per_worker = 1000;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&ledger, w] {
      for (int i = 0; i < per_worker; ++i) {
        Stage stage = static_cast<Stage>(i % kStageCount);
        ledger.record("q" + std::to_string(w % 4), stage, {1, 2});
        if (i % 100 == 0) ledger.record_samples("q" + std::to_string(w % 4), 1);
      }
    });
  }
  for (auto& t : pool) t.join();

  auto total = ledger.grand_total();
  CHECK(total.prompt_tokens == workers * per_worker);
  CHECK(total.completion_tokens == 2L * workers * per_worker);
  long stage_sum = 0;
  for (int s = 0; s < kStageCount; ++s)
    stage_sum += ledger.stage_total(static_cast<Stage>(s)).total();
  CHECK(stage_sum == total.total());
  CHECK(ledger.question_ids().size() == 4);
  // each of the 8 workers recorded 10 sample increments onto 4 questions
  CHECK(ledger.effective_k() == doctest::Approx(80.0 / 4.0));
}

TEST_CASE("effective k averages sample counts over metered questions") {
  TokenLedger ledger;
  ledger.record_samples("a", 5);
  ledger.record_samples("a", 35);  // escalation appends to the same question
  ledger.record_samples("b", 5);
  CHECK(ledger.samples_for("a") == 40);
  CHECK(ledger.samples_for("b") == 5);
  CHECK(ledger.effective_k() == doctest::Approx(22.5));
}

TEST_CASE("summarize folds outcomes and ledger together") {
  TokenLedger ledger;
  std::vector<QuestionOutcome> outcomes;
  // three easies: generation + classification + orm only
  for (int i = 0; i < 3; ++i) {
    std::string id = "easy" + std::to_string(i);
    ledger.record(id, Stage::Generation, {100, 400});
    ledger.record(id, Stage::Classification, {20, 2});
    ledger.record(id, Stage::OrmEval, {120, 0});
    ledger.record_samples(id, 40);
    QuestionOutcome o;
    o.id = id;
    o.routed = Difficulty::Easy;
    o.correct = (i != 2);
    outcomes.push_back(o);
  }
  // one medium that iterated twice, exiting early on the second pass
  {
    ledger.record("med", Stage::Generation, {100, 400});
    ledger.record("med", Stage::Classification, {20, 2});
    ledger.record("med", Stage::OrmEval, {150, 0});
    ledger.record("med", Stage::PrmEval, {300, 0});
    ledger.record("med", Stage::Correction, {80, 90});
    ledger.record_samples("med", 40);
    QuestionOutcome o;
    o.id = "med";
    o.routed = Difficulty::Medium;
    o.iterations = 2;
    o.early_exit = true;
    o.correct = true;
    outcomes.push_back(o);
  }
  // one failed hard: no grade
  {
    ledger.record("hard", Stage::Generation, {60, 100});
    QuestionOutcome o;
    o.id = "hard";
    o.routed = Difficulty::Hard;
    o.failed = true;
    outcomes.push_back(o);
  }

  auto s = summarize(ledger, outcomes);
  CHECK(s.questions == 5);
  CHECK(s.failed == 1);
  CHECK(s.graded == 4);
  CHECK(s.correct == 3);
  REQUIRE(s.accuracy.has_value());
  CHECK(*s.accuracy == doctest::Approx(0.75));
  // failed questions drop out of the routing and iteration tallies
  CHECK(s.routed_counts[0] == 3);
  CHECK(s.routed_counts[1] == 1);
  CHECK(s.routed_counts[2] == 0);
  CHECK(s.iteration_counts.at(0) == 3);
  CHECK(s.iteration_counts.at(2) == 1);
  CHECK(s.iteration_counts.count(1) == 0);
  CHECK(s.early_exits == 1);
  CHECK(s.effective_k == doctest::Approx(160.0 / 5.0));

  // easies must carry zero refinement-stage tokens
  for (int i = 0; i < 3; ++i) {
    auto u = ledger.usage_for("easy" + std::to_string(i));
    CHECK(u[static_cast<int>(Stage::PrmEval)].total() == 0);
    CHECK(u[static_cast<int>(Stage::Correction)].total() == 0);
  }

  // stage totals in the summary equal the ledger's
  BackendUsage recount;
  for (int st = 0; st < kStageCount; ++st) {
    CHECK(s.stage_usage[st].prompt_tokens ==
          ledger.stage_total(static_cast<Stage>(st)).prompt_tokens);
    CHECK(s.stage_usage[st].completion_tokens ==
          ledger.stage_total(static_cast<Stage>(st)).completion_tokens);
    recount += s.stage_usage[st];
  }
  CHECK(recount.prompt_tokens == s.total_usage.prompt_tokens);
  CHECK(recount.completion_tokens == s.total_usage.completion_tokens);
  CHECK(s.total_usage.total() == ledger.grand_total().total());
}

TEST_CASE("summarize with nothing graded leaves accuracy absent") {
  TokenLedger ledger;
  QuestionOutcome o;
  o.id = "only";
  o.failed = true;
  auto s = summarize(ledger, {o});
  CHECK(s.questions == 1);
  CHECK(s.failed == 1);
  CHECK(s.graded == 0);
  CHECK_FALSE(s.accuracy.has_value());
}

TEST_CASE("summary json parses back with matching fields") {
  TokenLedger ledger;
  ledger.record("q", Stage::Generation, {11, 22});
  ledger.record("q", Stage::Correction, {3, 4});
  ledger.record_samples("q", 7);
  QuestionOutcome o;
  o.id = "q";
  o.routed = Difficulty::Hard;
  o.iterations = 3;
  o.correct = true;
  auto s = summarize(ledger, {o});

  auto j = nlohmann::json::parse(summary_to_json(s));
  CHECK(j["questions"] == 1);
  CHECK(j["failed"] == 0);
  CHECK(j["graded"] == 1);
  CHECK(j["correct"] == 1);
  CHECK(j["accuracy"] == doctest::Approx(1.0));
  CHECK(j["effective_k"] == doctest::Approx(7.0));
  CHECK(j["early_exits"] == 0);
  CHECK(j["routed"]["easy"] == 0);
  CHECK(j["routed"]["medium"] == 0);
  CHECK(j["routed"]["hard"] == 1);
  CHECK(j["total_tokens"]["prompt"] == 14);
  CHECK(j["total_tokens"]["completion"] == 26);
  CHECK(j["total_tokens"]["total"] == 40);
  CHECK(j["stage_tokens"]["generation"]["prompt"] == 11);
  CHECK(j["stage_tokens"]["correction"]["completion"] == 4);
  CHECK(j["iterations"]["3"] == 1);
}

TEST_CASE("summary json renders absent accuracy as null") {
  TokenLedger ledger;
  auto s = summarize(ledger, {});
  auto j = nlohmann::json::parse(summary_to_json(s));
  CHECK(j["accuracy"].is_null());
  CHECK(j["questions"] == 0);
}
