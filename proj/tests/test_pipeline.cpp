#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest/doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "coficot/answers.hpp"
#include "coficot/backends.hpp"
#include "coficot/config.hpp"
#include "coficot/errors.hpp"
#include "coficot/harness.hpp"
#include "coficot/metering.hpp"
#include "coficot/pipeline.hpp"
#include "coficot/triage.hpp"

using namespace coficot;
using coficot::harness::MockWorld;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("coficot-pipe-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

backends::Backends backends_for(std::shared_ptr<const MockWorld> world,
                                std::uint64_t seed = 0) {
  backends::BackendOptions opts;
  opts.seed = seed;
  return backends::Backends(harness::make_mock_backends(std::move(world)),
                            opts);
}

std::shared_ptr<MockWorld> standard_world(std::uint64_t seed, int n) {
  auto world = std::make_shared<MockWorld>(seed);
  for (auto& t : harness::make_corpus(seed, n)) world->add_task(std::move(t));
  return world;
}

// Serialized records with the wallclock zeroed, the only field allowed to
// differ between identical runs.
std::vector<std::string> canonical_lines(
    std::vector<pipeline::RunRecord> records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (auto& r : records) {
    r.wallclock_ms = 0;
    lines.push_back(pipeline::record_to_json_line(r));
  }
  return lines;
}

BackendUsage stage2_usage(const pipeline::RunRecord& r) {
  return r.usage[static_cast<std::size_t>(metering::Stage::PrmEval)] +
         r.usage[static_cast<std::size_t>(metering::Stage::Correction)];
}

}  // namespace

TEST_CASE("dataset loading accepts the documented row shape") {
  TempDir dir;
  auto path = dir.file("ok.jsonl");
  write_file(path,
             "{\"id\":\"a\",\"question\":\"What is 2+2?\",\"answer\":\"4\"}\n"
             "\n"
             "{\"id\":\"b\",\"question\":\"Open question\"}\n"
             "{\"id\":\"c\",\"question\":\"Null gold\",\"answer\":null}\n");
  auto qs = pipeline::load_dataset_jsonl(path);
  REQUIRE(qs.size() == 3);
  CHECK(qs[0].id == "a");
  CHECK(qs[0].gold_answer == "4");
  CHECK_FALSE(qs[1].gold_answer.has_value());
  CHECK_FALSE(qs[2].gold_answer.has_value());
}

TEST_CASE("dataset errors carry the offending line number") {
  TempDir dir;
  auto check_error = [&](const std::string& name, const std::string& body,
                         const std::string& line_tag) {
    auto path = dir.file(name);
    write_file(path, body);
    try {
      pipeline::load_dataset_jsonl(path);
      FAIL("expected DatasetParseError for " << name);
    } catch (const DatasetParseError& e) {
      CHECK(std::string(e.what()).find(line_tag) != std::string::npos);
    }
  };
  check_error("syntax.jsonl",
              "{\"id\":\"a\",\"question\":\"q\"}\n"
              "{not json\n",
              ":2");
  check_error("notobject.jsonl", "[1,2,3]\n", ":1");
  check_error("missing.jsonl",
              "{\"id\":\"a\",\"question\":\"q\"}\n"
              "{\"id\":\"b\"}\n",
              ":2");
  check_error("emptyid.jsonl", "{\"id\":\"\",\"question\":\"q\"}\n", ":1");
  check_error("dup.jsonl",
              "{\"id\":\"a\",\"question\":\"q\"}\n"
              "{\"id\":\"a\",\"question\":\"r\"}\n",
              ":2");
  check_error("empty.jsonl", "\n\n", "no questions");
  CHECK_THROWS_AS(pipeline::load_dataset_jsonl(dir.file("absent.jsonl")),
                  DatasetParseError);
}

TEST_CASE("dataset round trip preserves every field") {
  TempDir dir;
  std::vector<Question> qs = {
      {"q1", "First question body", std::string("42")},
      {"q2", "Second body with \"quotes\" and \\ slashes", std::nullopt},
  };
  auto path = dir.file("roundtrip.jsonl");
  pipeline::save_dataset_jsonl(qs, path);
  auto back = pipeline::load_dataset_jsonl(path);
  REQUIRE(back.size() == qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CHECK(back[i].id == qs[i].id);
    CHECK(back[i].body == qs[i].body);
    CHECK(back[i].gold_answer == qs[i].gold_answer);
  }
}

TEST_CASE("run records survive JSONL serialization") {
  pipeline::RunRecord r;
  r.id = "q-17";
  r.verdict.confidence_label = Difficulty::Easy;
  r.verdict.reliability_label = Difficulty::Medium;
  r.verdict.complexity_label = Difficulty::Hard;
  r.verdict.entropy = 0.6931471805599453;
  r.verdict.confidence = 0.6456563062257954;
  r.verdict.consensus_zscore = 0.25;
  r.verdict.predicted_steps = 6;
  r.verdict.difficulty_score = 2.0;
  r.verdict.final = Difficulty::Medium;
  r.verdict.strategy = Strategy::Balanced;
  r.iterations = 2;
  r.iter_max = 3;
  r.early_exit = false;
  r.answer = "60";
  r.correct = true;
  r.samples = 40;
  r.usage[0] = {100, 900};
  r.usage[2] = {70, 5};
  r.failed = false;
  r.wallclock_ms = 1234;

  auto line = pipeline::record_to_json_line(r);
  auto back = pipeline::record_from_json_line(line);
  CHECK(pipeline::record_to_json_line(back) == line);
  CHECK(back.verdict.predicted_steps == 6);
  CHECK(back.correct == true);
  CHECK(back.usage[0].completion_tokens == 900);

  // absent optionals round-trip as well
  r.verdict.predicted_steps.reset();
  r.correct.reset();
  auto line2 = pipeline::record_to_json_line(r);
  auto back2 = pipeline::record_from_json_line(line2);
  CHECK_FALSE(back2.verdict.predicted_steps.has_value());
  CHECK_FALSE(back2.correct.has_value());
  CHECK(pipeline::record_to_json_line(back2) == line2);

  TempDir dir;
  auto path = dir.file("report.jsonl");
  pipeline::save_report_jsonl({r, back}, path);
  auto loaded = pipeline::load_report_jsonl(path);
  REQUIRE(loaded.size() == 2);
  CHECK(pipeline::record_to_json_line(loaded[1]) == line);
}

TEST_CASE("an adaptive run routes, grades, and meters every question") {
  auto world = standard_world(31, 30);
  auto be = backends_for(world);
  auto dataset = world->questions();

  pipeline::RunOptions opts;
  opts.cfg.k = 12;
  opts.calibrate_from_run = true;
  opts.parallel = 4;
  auto result = pipeline::run(dataset, opts, be);

  REQUIRE(result.records.size() == dataset.size());
  std::set<std::string> seen;
  std::size_t easies = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& rec = result.records[i];
    CHECK(rec.id == dataset[i].id);
    CHECK(seen.insert(rec.id).second);
    REQUIRE_FALSE(rec.failed);
    CHECK(rec.answer != kUnanswered);
    CHECK(rec.samples == 12);
    REQUIRE(rec.correct.has_value());
    // independent regrade against the world oracle
    CHECK(*rec.correct == world->is_correct(rec.id, rec.answer));
    CHECK(rec.usage[static_cast<std::size_t>(metering::Stage::Generation)]
              .total() > 0);
    if (rec.verdict.final == Difficulty::Easy) {
      ++easies;
      CHECK(rec.iterations == 0);
      CHECK(rec.iter_max == 0);
      CHECK_FALSE(rec.early_exit);
      CHECK(stage2_usage(rec).total() == 0);
    } else {
      CHECK(rec.iter_max == opts.cfg.iter_max_for(rec.verdict.final));
      CHECK(rec.iterations >= 1);
      CHECK(rec.iterations <= rec.iter_max);
    }
  }
  // the corpus mixes classes, so both routes must actually run
  CHECK(easies > 0);
  CHECK(easies < dataset.size());

  CHECK(result.summary.questions == dataset.size());
  CHECK(result.summary.failed == 0);
  CHECK(result.summary.effective_k == doctest::Approx(12.0));
  CHECK(result.calibration.t33 <= result.calibration.t67);

  // conservation: the facade counter equals the metered ledger exactly
  BackendUsage from_records;
  for (const auto& rec : result.records)
    for (const auto& u : rec.usage) from_records += u;
  CHECK(from_records.prompt_tokens ==
        result.summary.total_usage.prompt_tokens);
  CHECK(from_records.completion_tokens ==
        result.summary.total_usage.completion_tokens);
  CHECK(result.observed_total.prompt_tokens == from_records.prompt_tokens);
  CHECK(result.observed_total.completion_tokens ==
        from_records.completion_tokens);
  CHECK(result.backend_attempts > 0);
}

TEST_CASE("identical runs serialize identically") {
  auto world = standard_world(57, 18);
  auto dataset = world->questions();
  pipeline::RunOptions opts;
  opts.cfg.k = 10;
  opts.calibrate_from_run = true;
  opts.parallel = 6;

  auto be1 = backends_for(world);
  auto r1 = pipeline::run(dataset, opts, be1);
  auto be2 = backends_for(world);
  auto r2 = pipeline::run(dataset, opts, be2);

  CHECK(canonical_lines(r1.records) == canonical_lines(r2.records));
  CHECK(metering::summary_to_json(r1.summary) ==
        metering::summary_to_json(r2.summary));
  CHECK(r1.calibration.t33 == r2.calibration.t33);
  CHECK(r1.calibration.t67 == r2.calibration.t67);
}

TEST_CASE("a run without any calibration source is refused") {
  auto world = standard_world(5, 3);
  auto be = backends_for(world);
  pipeline::RunOptions opts;  // no calibration, no calibrate_from_run
  CHECK_THROWS_AS(pipeline::run(world->questions(), opts, be),
                  MissingCalibration);
}

TEST_CASE("standalone calibration matches a manual ensemble census") {
  auto world = standard_world(71, 12);
  auto dataset = world->questions();
  PipelineConfig cfg;
  cfg.k = 8;

  auto be = backends_for(world);
  auto cal = pipeline::calibrate(dataset, cfg, be, 4);

  auto be2 = backends_for(world);
  std::vector<int> counts;
  for (const auto& q : dataset) {
    for (const auto& r : be2.generate_ensemble(q, cfg.k, cfg.temperature)) {
      counts.push_back(static_cast<int>(r.trace.steps.size()));
    }
  }
  auto expect = triage::build_calibration(std::move(counts));
  CHECK(cal.t33 == expect.t33);
  CHECK(cal.t67 == expect.t67);
  CHECK(cal.lengths == expect.lengths);
}

TEST_CASE("comparing a report against itself yields the identity") {
  auto world = standard_world(83, 10);
  auto be = backends_for(world);
  pipeline::RunOptions opts;
  opts.cfg.k = 8;
  opts.calibrate_from_run = true;
  auto result = pipeline::run(world->questions(), opts, be);

  auto c = pipeline::compare(result.records, result.records);
  CHECK(c.accuracy_delta == doctest::Approx(0.0));
  CHECK(c.token_delta == 0);
  CHECK(c.token_ratio == doctest::Approx(1.0));
  CHECK(c.completion_token_delta == 0);
  CHECK(c.completion_token_ratio == doctest::Approx(1.0));
  CHECK(c.a.questions == 10);
  CHECK(c.a.total_tokens ==
        c.a.prompt_tokens + c.a.completion_tokens);
  CHECK(c.a.total_tokens > 0);

  auto fewer = result.records;
  fewer.pop_back();
  CHECK_THROWS_AS(pipeline::compare(result.records, fewer), IdMismatch);

  auto renamed = result.records;
  renamed[0].id = "somebody-else";
  CHECK_THROWS_AS(pipeline::compare(result.records, renamed), IdMismatch);

  auto j = pipeline::comparison_to_json(c);
  CHECK(j.find("\"token_ratio\"") != std::string::npos);
  CHECK(j.find("\"completion_token_ratio\"") != std::string::npos);
}

TEST_CASE("one unanswerable question never poisons the rest") {
  auto world = standard_world(29, 12);
  auto dataset = world->questions();

  PipelineConfig cal_cfg;
  cal_cfg.k = 8;
  auto cal_be = backends_for(world);
  auto cal = pipeline::calibrate(dataset, cal_cfg, cal_be, 4);

  pipeline::RunOptions opts;
  opts.cfg.k = 8;
  opts.calibration = cal;

  auto be_clean = backends_for(world);
  auto clean = pipeline::run(dataset, opts, be_clean);

  auto poisoned = dataset;
  Question ghost;
  ghost.id = "ghost";
  ghost.body = "This question exists in no world.";
  ghost.gold_answer = "1";
  poisoned.insert(poisoned.begin() + 4, ghost);

  auto be_poisoned = backends_for(world);
  auto mixed = pipeline::run(poisoned, opts, be_poisoned);

  REQUIRE(mixed.records.size() == dataset.size() + 1);
  const auto& bad = mixed.records[4];
  CHECK(bad.id == "ghost");
  CHECK(bad.failed);
  CHECK_FALSE(bad.failure.empty());
  CHECK(bad.answer == kUnanswered);
  CHECK(bad.correct == false);

  // the surviving records are byte-identical to the clean run
  std::vector<pipeline::RunRecord> survivors;
  for (const auto& r : mixed.records)
    if (r.id != "ghost") survivors.push_back(r);
  CHECK(canonical_lines(survivors) == canonical_lines(clean.records));

  CHECK(mixed.summary.failed == 1);
  CHECK(mixed.summary.questions == dataset.size() + 1);
}

TEST_CASE("forced refinement drags easy questions through the loop") {
  auto world = standard_world(31, 30);
  auto dataset = world->questions();
  pipeline::RunOptions opts;
  opts.cfg.k = 12;
  opts.calibrate_from_run = true;

  auto be_full = backends_for(world);
  auto full = pipeline::run(dataset, opts, be_full);

  opts.force_refinement = true;
  auto be_forced = backends_for(world);
  auto forced = pipeline::run(dataset, opts, be_forced);

  std::size_t forced_easies = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& f = forced.records[i];
    REQUIRE_FALSE(f.failed);
    // the verdict is reported untouched; only the routing changes
    CHECK(f.verdict.final == full.records[i].verdict.final);
    if (f.verdict.final == Difficulty::Easy) {
      ++forced_easies;
      CHECK(f.iter_max == opts.cfg.iter_max_medium);
      CHECK(f.iterations >= 1);
      CHECK(stage2_usage(f).total() > 0);
    }
  }
  CHECK(forced_easies > 0);
  CHECK(forced.summary.total_usage.total() >
        full.summary.total_usage.total());
}

TEST_CASE("pessimistic routing dominates optimistic routing") {
  auto world = standard_world(43, 24);
  auto dataset = world->questions();

  pipeline::RunOptions opts;
  opts.cfg.k = 10;
  opts.calibrate_from_run = true;

  opts.cfg.strategy = Strategy::Pessimistic;
  auto be_p = backends_for(world);
  auto pess = pipeline::run(dataset, opts, be_p);

  opts.cfg.strategy = Strategy::Optimistic;
  auto be_o = backends_for(world);
  auto opt = pipeline::run(dataset, opts, be_o);

  // the initial ensembles are identical, so the verdicts compare pointwise
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    CHECK(rank(pess.records[i].verdict.final) >=
          rank(opt.records[i].verdict.final));
  }
  CHECK(pess.summary.routed_counts[2] >= opt.summary.routed_counts[2]);
  CHECK(pess.summary.routed_counts[0] <= opt.summary.routed_counts[0]);
}

TEST_CASE("a single-sample run degenerates cleanly") {
  auto world = standard_world(61, 12);
  auto be = backends_for(world);
  pipeline::RunOptions opts;
  opts.cfg.k = 1;
  opts.calibrate_from_run = true;
  auto result = pipeline::run(world->questions(), opts, be);

  for (const auto& rec : result.records) {
    REQUIRE_FALSE(rec.failed);
    CHECK(rec.samples == 1);
    // one trace is one cluster: zero entropy, sentinel z-score
    CHECK(rec.verdict.entropy == 0.0);
    CHECK(rec.verdict.consensus_zscore == 0.0);
    CHECK(rec.answer != kUnanswered);
  }
  CHECK(result.summary.effective_k == doctest::Approx(1.0));
}

TEST_CASE("progressive sampling escalates exactly the unsettled questions") {
  auto world = standard_world(17, 24);
  auto dataset = world->questions();

  PipelineConfig cal_cfg;
  cal_cfg.k = 16;
  auto cal_be = backends_for(world);
  auto cal = pipeline::calibrate(dataset, cal_cfg, cal_be, 4);

  pipeline::RunOptions opts;
  opts.cfg.k = 16;
  opts.calibration = cal;

  auto be_full = backends_for(world);
  auto full = pipeline::run(dataset, opts, be_full);

  opts.cfg.progressive_sampling = ProgressiveSampling{5, 0.85};
  auto be_prog = backends_for(world);
  auto prog = pipeline::run(dataset, opts, be_prog);

  std::size_t stayed = 0, escalated = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& p = prog.records[i];
    REQUIRE_FALSE(p.failed);
    if (p.samples == 5) {
      ++stayed;
    } else {
      // escalation continues the same sample stream, so the full ensemble
      // and therefore the answer match the non-progressive run
      CHECK(p.samples == 16);
      CHECK(p.answer == full.records[i].answer);
      ++escalated;
    }
  }
  // both arms of the policy must trigger on a mixed corpus
  CHECK(stayed > 0);
  CHECK(escalated > 0);
  CHECK(prog.summary.total_usage.completion_tokens <
        full.summary.total_usage.completion_tokens);
  CHECK(prog.summary.effective_k < 16.0);
}
