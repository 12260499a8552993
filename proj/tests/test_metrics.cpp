// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "gcdt/errors.hpp"
#include "gcdt/metrics.hpp"

using namespace gcdt;

#ifndef GCDT_TEST_DATA
#define GCDT_TEST_DATA "tests/data"
#endif

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("extract_chunks examples") {
  using S = std::vector<ChunkSpan>;
  CHECK(extract_chunks({"S-PER", "O", "B-LOC", "E-LOC"}) == S{{"LOC", 2, 3}, {"PER", 0, 0}});
  CHECK(extract_chunks({"O", "O"}).empty());
  CHECK(extract_chunks({"I-ORG", "E-ORG"}) == S{{"ORG", 0, 1}});
  CHECK(extract_chunks({"B-PER", "B-PER"}) == S{{"PER", 0, 0}, {"PER", 1, 1}});
  CHECK(extract_chunks({"B-PER", "I-LOC"}) == S{{"LOC", 1, 1}, {"PER", 0, 0}});
  CHECK(extract_chunks({"E-PER", "E-PER"}) == S{{"PER", 0, 0}, {"PER", 1, 1}});
  CHECK_THROWS(extract_chunks({"X-PER"}));
}

TEST_CASE("evaluate examples") {
  const std::vector<std::vector<std::string>> gold{{"S-PER", "O", "B-LOC", "E-LOC"}};
  const auto same = evaluate(gold, gold);
  CHECK(same.overall.precision() == 1.0);
  CHECK(same.overall.recall() == 1.0);
  CHECK(same.overall.f1() == 1.0);

  const auto half = evaluate(gold, {{"S-PER", "O", "S-LOC", "O"}});
  CHECK(half.overall.precision() == 0.5);
  CHECK(half.overall.recall() == 0.5);
  CHECK(half.overall.f1() == 0.5);

  const auto none = evaluate(gold, {{"O", "O", "O", "O"}});
  CHECK(none.overall.predicted == 0);
  CHECK(none.overall.precision() == 0.0);
  CHECK(none.overall.recall() == 0.0);
  CHECK(none.overall.f1() == 0.0);

  try {
    evaluate({{"O"}, {"O", "O"}}, {{"O"}, {"O"}});
    FAIL("expected a length error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("sentence 1") != std::string::npos);
  }
}

TEST_CASE("report invariants and sentence-order symmetry") {
  const std::vector<std::vector<std::string>> gold{{"B-A", "E-A", "O"}, {"S-B"}, {"O", "S-A"}};
  const std::vector<std::vector<std::string>> pred{{"B-A", "I-A", "S-B"}, {"S-A"}, {"I-A", "E-A"}};
  const auto r = evaluate(gold, pred);
  CHECK(r.overall.correct <= std::min(r.overall.gold, r.overall.predicted));
  for (const auto& [type, c] : r.per_type) {
    CAPTURE(type);
    CHECK(c.correct <= std::min(c.gold, c.predicted));
    const double p = c.precision(), rc = c.recall();
    CHECK(c.f1() == doctest::Approx(p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0));
  }
  const auto reversed = evaluate({gold[2], gold[1], gold[0]}, {pred[2], pred[1], pred[0]});
  CHECK(format_report(reversed) == format_report(r));
}

TEST_CASE("golden file matches the official script's report") {
  std::ifstream in(GCDT_TEST_DATA "/golden_eval.txt");
  REQUIRE(in);
  const auto report = evaluate_columns(in);
  CHECK(format_report(report) == slurp(GCDT_TEST_DATA "/golden_eval.expected"));
}

TEST_CASE("identical columns score 100 and per-type lines are sorted") {
  std::istringstream in("a X B-ZED B-ZED\nb X E-ZED E-ZED\nc X S-ALP S-ALP\n\nd X O O\n");
  const std::string text = format_report(evaluate_columns(in));
  CHECK(text.find("precision: 100.00%; recall: 100.00%; FB1: 100.00") != std::string::npos);
  CHECK(text.find("ALP") < text.find("ZED"));
}

TEST_CASE("malformed evaluation lines name the line") {
  std::istringstream in("a X O O\nb O\n");
  try {
    evaluate_columns(in);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}
