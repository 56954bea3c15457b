#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest/doctest.h>

#include <string>
#include <vector>

#include "coficot/errors.hpp"
#include "coficot/segmentation.hpp"
#include "coficot/util.hpp"

using namespace coficot;

namespace {

std::string rejoin(const std::vector<Step>& steps) {
  std::string out;
  for (const auto& s : steps) {
    if (!out.empty()) out += '\n';
    out += s.text;
  }
  return out;
}

std::string strip_trailing_ws(std::string text) {
  while (!text.empty() &&
         (text.back() == ' ' || text.back() == '\t' || text.back() == '\n' ||
          text.back() == '\r')) {
    text.pop_back();
  }
  return text;
}

}  // namespace

TEST_CASE("marker lines open steps") {
  auto steps = segment_steps("Step 1: add 2; value now 7.\n"
                             "Step 2: multiply by 3; value now 21.\n"
                             "Answer: 21");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].index == 0);
  CHECK(steps[1].index == 1);
  CHECK(steps[0].text == "Step 1: add 2; value now 7.");
  // trailing lines without a marker belong to the preceding step
  CHECK(steps[1].text == "Step 2: multiply by 3; value now 21.\nAnswer: 21");
}

TEST_CASE("preamble before the first marker is its own step") {
  auto steps = segment_steps("Let me think about this.\n"
                             "Step 1: first\n"
                             "Step 2: second");
  REQUIRE(steps.size() == 3);
  CHECK(steps[0].text == "Let me think about this.");
  CHECK(steps[1].text == "Step 1: first");
  CHECK(steps[2].text == "Step 2: second");
}

TEST_CASE("markers are case-insensitive and tolerate leading blanks") {
  auto steps = segment_steps("  step 1: lower\nSTEP 2: upper");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].text == "  step 1: lower");
  CHECK(steps[1].text == "STEP 2: upper");
}

TEST_CASE("multi-line step bodies attach to their marker") {
  auto steps = segment_steps("Step 1: compute\nthe partial sum\nStep 2: done");
  REQUIRE(steps.size() == 2);
  CHECK(steps[0].text == "Step 1: compute\nthe partial sum");
}

TEST_CASE("no markers fall back to paragraphs") {
  auto steps = segment_steps("first thought\n\nsecond thought\ncontinued\n\n"
                             "third thought");
  REQUIRE(steps.size() == 3);
  CHECK(steps[0].text == "first thought");
  CHECK(steps[1].text == "second thought\ncontinued");
  CHECK(steps[2].text == "third thought");
}

TEST_CASE("single paragraph becomes one step") {
  auto steps = segment_steps("just one blob of text");
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].index == 0);
}

TEST_CASE("empty and whitespace-only input throw") {
  CHECK_THROWS_AS(segment_steps(""), EmptyCompletion);
  CHECK_THROWS_AS(segment_steps("   \n\t \n"), EmptyCompletion);
}

TEST_CASE("marker detector") {
  CHECK(is_step_marker_line("Step 1: x"));
  CHECK(is_step_marker_line("  Step 12: y"));
  CHECK(is_step_marker_line("step 3:"));
  CHECK_FALSE(is_step_marker_line("Steps 1: x"));
  CHECK_FALSE(is_step_marker_line("Step : x"));
  CHECK_FALSE(is_step_marker_line("Step one: x"));
  CHECK_FALSE(is_step_marker_line("By Step 1: x"));
  CHECK_FALSE(is_step_marker_line(""));
}

TEST_CASE("round trip: rejoined steps equal the input modulo trailing space") {
  // Generated marker chains of varying shapes, including blank body lines
  // and preambles, must survive segmentation losslessly.
  Rng rng(417);
  for (int iter = 0; iter < 200; ++iter) {
    std::string text;
    if (rng.bernoulli(0.3)) text += "preamble line\n";
    long n = rng.range(1, 6);
    for (long s = 0; s < n; ++s) {
      text += "Step " + std::to_string(s + 1) + ": op " +
              std::to_string(rng.range(0, 99));
      if (rng.bernoulli(0.3)) text += "\ncontinuation detail";
      text += '\n';
    }
    text += "Answer: " + std::to_string(rng.range(-50, 50));
    if (rng.bernoulli(0.5)) text += '\n';

    auto steps = segment_steps(text);
    CHECK(rejoin(steps) == strip_trailing_ws(text));
    for (std::size_t i = 0; i < steps.size(); ++i) {
      CHECK(steps[i].index == static_cast<int>(i));
      CHECK_FALSE(steps[i].prm_score.has_value());
    }
  }
}

TEST_CASE("indices are contiguous from zero in paragraph mode") {
  auto steps = segment_steps("a\n\nb\n\nc\n\nd");
  REQUIRE(steps.size() == 4);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    CHECK(steps[i].index == static_cast<int>(i));
  }
}
