#include <array>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "coficot/harness.hpp"
#include "coficot/mock_server.hpp"
#include "coficot/pipeline.hpp"

using namespace coficot;

int main(int argc, char** argv) {
  CLI::App app{"Deterministic mock backend server for the adaptive router"};

  std::string corpus_path;
  std::uint64_t seed = 7;
  int n = 300;
  std::array<double, 3> mix{1.0 / 3, 1.0 / 3, 1.0 / 3};
  int port = 8080;
  std::string dump_dataset, dump_corpus;

  app.add_option("--corpus", corpus_path,
                 "Serve an existing world file instead of generating one");
  app.add_option("--seed", seed, "World seed for a generated corpus");
  app.add_option("--n", n, "Task count for a generated corpus");
  app.add_option("--mix", mix,
                 "Class proportions easy medium hard (sum to 1)")
      ->expected(3);
  app.add_option("--port", port, "Listen port (0 picks a free one)");
  app.add_option("--dump-dataset", dump_dataset,
                 "Also write the question JSONL for clients");
  app.add_option("--dump-corpus", dump_corpus,
                 "Also write the generated world file");

  CLI11_PARSE(app, argc, argv);

  try {
    std::shared_ptr<harness::MockWorld> world;
    if (!corpus_path.empty()) {
      world = std::make_shared<harness::MockWorld>(
          harness::load_corpus_jsonl(corpus_path));
    } else {
      harness::CorpusSpec spec;
      spec.mix = mix;
      world = std::make_shared<harness::MockWorld>(seed);
      for (auto& task : harness::make_corpus(seed, n, spec)) {
        world->add_task(std::move(task));
      }
    }
    if (!dump_corpus.empty()) {
      harness::save_corpus_jsonl(*world, dump_corpus);
      std::cerr << "corpus written to " << dump_corpus << "\n";
    }
    if (!dump_dataset.empty()) {
      pipeline::save_dataset_jsonl(world->questions(), dump_dataset);
      std::cerr << "dataset written to " << dump_dataset << "\n";
    }

    harness::MockServer server(world);
    int bound = server.start(port);
    std::cout << "GEN_URL=" << server.chat_url() << "\n"
              << "ORM_URL=" << server.orm_url() << "\n"
              << "PRM_URL=" << server.prm_url() << "\n";
    std::cerr << "serving " << world->size() << " tasks on port " << bound
              << "\n";
    server.wait();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
