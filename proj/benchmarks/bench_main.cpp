#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "coficot/answers.hpp"
#include "coficot/backends.hpp"
#include "coficot/config.hpp"
#include "coficot/harness.hpp"
#include "coficot/pipeline.hpp"
#include "coficot/refine.hpp"
#include "coficot/segmentation.hpp"
#include "coficot/triage.hpp"
#include "coficot/types.hpp"

namespace {

using namespace coficot;

// One shared mock world and facade; every benchmark reads from it, none
// mutates it.
struct Fixture {
  std::shared_ptr<harness::MockWorld> world;
  backends::Backends be;
  std::vector<Question> questions;
  triage::Calibration cal;
  std::vector<ReasoningTrace> ensemble;  // 40 scored traces for one question
  PipelineConfig cfg;

  Fixture()
      : world(build_world()),
        be(harness::make_mock_backends(world),
           [] {
             backends::BackendOptions o;
             o.seed = 11;
             return o;
           }()),
        questions(world->questions()),
        cal(triage::build_calibration(
            {3, 3, 4, 4, 5, 5, 6, 6, 7, 8, 9, 10})) {
    const Question& q = questions.front();
    for (auto& r : be.generate_ensemble(q, 40, cfg.temperature))
      ensemble.push_back(std::move(r.trace));
    for (auto& t : ensemble) t.orm_score = be.orm_score(q, t).first;
  }

  static std::shared_ptr<harness::MockWorld> build_world() {
    auto w = std::make_shared<harness::MockWorld>(11);
    for (auto& t : harness::make_corpus(11, 12)) w->add_task(std::move(t));
    return w;
  }
};

Fixture& fix() {
  static Fixture f;
  return f;
}

void bm_segment_steps(benchmark::State& state) {
  const std::string text = fix().ensemble.front().text();
  for (auto _ : state) {
    auto steps = segment_steps(text);
    benchmark::DoNotOptimize(steps);
  }
}
BENCHMARK(bm_segment_steps);

void bm_normalize_answer(benchmark::State& state) {
  const std::vector<std::string> raws = {" 1,200.0 ", "3/6",          "(C)",
                                         "42.",       "Sixty apples", "-3.0"};
  for (auto _ : state) {
    for (const auto& raw : raws)
      benchmark::DoNotOptimize(answers::normalize_answer(raw));
  }
}
BENCHMARK(bm_normalize_answer);

void bm_cluster_and_vote(benchmark::State& state) {
  const auto& ensemble = fix().ensemble;
  for (auto _ : state) {
    auto clusters = answers::cluster_solutions(ensemble);
    benchmark::DoNotOptimize(answers::weighted_vote(clusters));
  }
}
BENCHMARK(bm_cluster_and_vote);

void bm_classify(benchmark::State& state) {
  auto& f = fix();
  for (auto _ : state) {
    auto verdict = triage::classify(f.ensemble, 4, f.cal, f.cfg);
    benchmark::DoNotOptimize(verdict);
  }
}
BENCHMARK(bm_classify);

void bm_select_top_k(benchmark::State& state) {
  auto& f = fix();
  // pool of originals plus refined shadows, scores perturbed so order is
  // nontrivial
  std::vector<ReasoningTrace> pool = f.ensemble;
  std::size_t extras = static_cast<std::size_t>(state.range(0)) - pool.size();
  for (std::size_t i = 0; i < extras; ++i) {
    ReasoningTrace t = f.ensemble[i % f.ensemble.size()];
    t.trace_id += ".r1";
    t.origin_iteration = 1;
    t.orm_score = *t.orm_score * 0.5 + 0.25;
    pool.push_back(std::move(t));
  }
  for (auto _ : state) {
    auto kept =
        refine::select_top_k(pool, 40, refine::SelectionMetric::OrmScore);
    benchmark::DoNotOptimize(kept);
  }
}
BENCHMARK(bm_select_top_k)->Arg(48)->Arg(80);

void bm_question_adaptive(benchmark::State& state) {
  auto& f = fix();
  pipeline::RunOptions opts;
  opts.cfg.seed = 11;
  opts.calibration = f.cal;
  opts.parallel = 8;
  std::vector<Question> one = {f.questions.front()};
  for (auto _ : state) {
    auto be = backends::Backends(harness::make_mock_backends(f.world),
                                 [] {
                                   backends::BackendOptions o;
                                   o.seed = 11;
                                   return o;
                                 }());
    auto result = pipeline::run(one, opts, be);
    benchmark::DoNotOptimize(result);
  }
}
BENCHMARK(bm_question_adaptive)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
