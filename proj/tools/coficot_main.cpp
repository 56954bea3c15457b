#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coficot/backends.hpp"
#include "coficot/config.hpp"
#include "coficot/errors.hpp"
#include "coficot/harness.hpp"
#include "coficot/metering.hpp"
#include "coficot/pipeline.hpp"
#include "coficot/triage.hpp"

namespace {

using namespace coficot;

std::string env_or(const char* name, const std::string& fallback = "") {
  const char* v = std::getenv(name);
  return v != nullptr ? std::string(v) : fallback;
}

struct CommonArgs {
  std::string dataset_path;
  std::string config_path;
  std::string backend = "mock";
  std::string corpus_path;
  long long seed = -1;  // -1: keep the config's seed
  int k = 0;            // 0: keep the config's k
  std::string strategy;
  std::string ablation;
  unsigned parallel = 4;
  std::string out;
};

void add_common_options(CLI::App* cmd, CommonArgs& args, bool needs_backend) {
  cmd->add_option("--dataset", args.dataset_path,
                  "Question file, JSONL rows {\"id\",\"question\",\"answer\"?}");
  cmd->add_option("--config", args.config_path, "Pipeline config JSON file");
  cmd->add_option("--k", args.k, "Ensemble size override");
  cmd->add_option("--seed", args.seed, "Run seed override");
  cmd->add_option("--parallel", args.parallel,
                  "Concurrent questions (default 4)");
  if (needs_backend) {
    cmd->add_option("--backend", args.backend, "Transport: http or mock")
        ->check(CLI::IsMember({"http", "mock"}));
    cmd->add_option("--corpus", args.corpus_path,
                    "Mock world file (required with --backend mock)");
  }
}

PipelineConfig resolve_config(const CLI::App* cmd, const CommonArgs& args) {
  PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
  if (cmd->count("--k") > 0) cfg.k = args.k;
  if (cmd->count("--seed") > 0) cfg.seed = args.seed;
  if (!args.strategy.empty()) cfg.strategy = parse_strategy(args.strategy);
  if (!args.ablation.empty()) cfg.ablation_mode = parse_ablation(args.ablation);
  return validate_config(cfg);
}

struct ResolvedBackend {
  backends::BackendSet set;
  std::shared_ptr<harness::MockWorld> world;  // only for --backend mock
};

ResolvedBackend resolve_backend(const CommonArgs& args) {
  ResolvedBackend r;
  if (args.backend == "http") {
    std::string gen = env_or("GEN_URL");
    std::string orm = env_or("ORM_URL");
    std::string prm = env_or("PRM_URL");
    if (gen.empty() || orm.empty() || prm.empty()) {
      throw Error(
          "http backend needs GEN_URL, ORM_URL and PRM_URL in the "
          "environment");
    }
    std::string key = env_or("API_KEY");
    r.set.generator = backends::make_http_chat_client(gen, key);
    r.set.orm = backends::make_http_score_client(orm, key);
    r.set.prm = backends::make_http_score_client(prm, key);
    return r;
  }
  if (args.corpus_path.empty()) {
    throw Error("--backend mock needs --corpus");
  }
  r.world = std::make_shared<harness::MockWorld>(
      harness::load_corpus_jsonl(args.corpus_path));
  r.set = harness::make_mock_backends(r.world);
  return r;
}

std::vector<Question> resolve_dataset(const CommonArgs& args,
                                      const ResolvedBackend& backend) {
  if (!args.dataset_path.empty()) {
    return pipeline::load_dataset_jsonl(args.dataset_path);
  }
  if (backend.world != nullptr) return backend.world->questions();
  throw Error("--dataset is required with --backend http");
}

backends::Backends make_facade(const ResolvedBackend& rb,
                               const PipelineConfig& cfg) {
  backends::BackendOptions opts;
  opts.ablation = cfg.ablation_mode;
  opts.seed = static_cast<std::uint64_t>(cfg.seed);
  return backends::Backends(rb.set, opts);
}

int cmd_run(const CLI::App* cmd, const CommonArgs& args,
            const std::string& calibration_path, bool calibrate_from_run,
            bool force_refinement) {
  PipelineConfig cfg = resolve_config(cmd, args);
  ResolvedBackend rb = resolve_backend(args);
  std::vector<Question> dataset = resolve_dataset(args, rb);
  backends::Backends be = make_facade(rb, cfg);

  pipeline::RunOptions opts;
  opts.cfg = cfg;
  opts.parallel = args.parallel;
  opts.calibrate_from_run = calibrate_from_run;
  opts.force_refinement = force_refinement;
  if (!calibration_path.empty()) {
    opts.calibration = triage::load_calibration_file(calibration_path);
  }

  pipeline::RunResult result = pipeline::run(dataset, opts, be);

  std::string out = args.out.empty() ? "report.jsonl" : args.out;
  pipeline::save_report_jsonl(result.records, out);
  std::cout << metering::summary_to_json(result.summary) << "\n";
  std::cerr << "report written to " << out << "\n";
  return 0;
}

int cmd_calibrate(const CLI::App* cmd, const CommonArgs& args) {
  PipelineConfig cfg = resolve_config(cmd, args);
  ResolvedBackend rb = resolve_backend(args);
  std::vector<Question> dataset = resolve_dataset(args, rb);
  backends::Backends be = make_facade(rb, cfg);

  triage::Calibration cal =
      pipeline::calibrate(dataset, cfg, be, args.parallel);
  std::string out = args.out.empty() ? "calibration.txt" : args.out;
  triage::save_calibration_file(cal, out);
  if (cal.t33 == cal.t67) {
    std::cerr << "warning: degenerate calibration thresholds (t33 == t67 == "
              << cal.t33 << ")\n";
  }
  std::cout << "t33 " << cal.t33 << "\nt67 " << cal.t67 << "\n";
  std::cerr << "calibration written to " << out << "\n";
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b) {
  auto a = pipeline::load_report_jsonl(path_a);
  auto b = pipeline::load_report_jsonl(path_b);
  std::cout << pipeline::comparison_to_json(pipeline::compare(a, b)) << "\n";
  return 0;
}

int cmd_baseline(const CLI::App* cmd, const CommonArgs& args,
                 const std::string& method_name) {
  PipelineConfig cfg = resolve_config(cmd, args);
  ResolvedBackend rb = resolve_backend(args);
  std::vector<Question> dataset = resolve_dataset(args, rb);
  backends::Backends be = make_facade(rb, cfg);

  harness::BaselineMethod method = harness::parse_baseline_method(method_name);
  metering::TokenLedger ledger;
  harness::BaselineResult result =
      harness::run_baseline(dataset, be, method, cfg.k, cfg.temperature,
                            args.parallel, &ledger);

  if (!args.out.empty()) {
    // Emit the report in the run-record schema so `compare` accepts it.
    std::vector<pipeline::RunRecord> records;
    records.reserve(result.records.size());
    for (const auto& r : result.records) {
      pipeline::RunRecord rec;
      rec.id = r.id;
      rec.answer = r.answer;
      rec.correct = r.correct;
      rec.failed = r.failed;
      rec.usage = ledger.usage_for(r.id);
      rec.samples = ledger.samples_for(r.id);
      records.push_back(std::move(rec));
    }
    pipeline::save_report_jsonl(records, args.out);
    std::cerr << "report written to " << args.out << "\n";
  }
  std::cout << metering::summary_to_json(result.summary) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive test-time-compute router over chat/scorer backends"};
  app.require_subcommand(1);

  CommonArgs run_args, cal_args, base_args;
  std::string calibration_path;
  bool calibrate_from_run = false;
  bool force_refinement = false;
  std::string method = "sc";
  std::string compare_a, compare_b;

  CLI::App* run_cmd = app.add_subcommand("run", "Full adaptive run");
  add_common_options(run_cmd, run_args, true);
  run_cmd->add_option("--calibration", calibration_path,
                      "Step-count calibration file");
  run_cmd->add_flag("--calibrate-from-run", calibrate_from_run,
                    "Derive the calibration from this run's own ensembles");
  run_cmd->add_option("--strategy", run_args.strategy,
                      "balanced | pessimistic | optimistic | democratic");
  run_cmd->add_option("--ablation", run_args.ablation,
                      "full | orm-only | prm-only");
  run_cmd->add_flag("--force-refinement", force_refinement,
                    "Ablation: send every question through the correction "
                    "loop");
  run_cmd->add_option("--out", run_args.out,
                      "Report path (default report.jsonl)");

  CLI::App* cal_cmd =
      app.add_subcommand("calibrate", "Build the step-count calibration");
  add_common_options(cal_cmd, cal_args, true);
  cal_cmd->add_option("--out", cal_args.out,
                      "Calibration path (default calibration.txt)");

  CLI::App* cmp_cmd = app.add_subcommand("compare", "Compare two reports");
  cmp_cmd->add_option("report_a", compare_a, "First report JSONL")->required();
  cmp_cmd->add_option("report_b", compare_b, "Second report JSONL")
      ->required();

  CLI::App* base_cmd =
      app.add_subcommand("baseline", "Non-adaptive reference methods");
  add_common_options(base_cmd, base_args, true);
  base_cmd->add_option("--method", method, "sc | best-of-k");
  base_cmd->add_option("--out", base_args.out,
                       "Report path (run-record schema)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      return cmd_run(run_cmd, run_args, calibration_path, calibrate_from_run,
                     force_refinement);
    }
    if (cal_cmd->parsed()) return cmd_calibrate(cal_cmd, cal_args);
    if (cmp_cmd->parsed()) return cmd_compare(compare_a, compare_b);
    if (base_cmd->parsed()) return cmd_baseline(base_cmd, base_args, method);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
