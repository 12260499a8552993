// SPDX-License-Identifier: Apache-2.0
#include "gcdt/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "gcdt/conll.hpp"
#include "gcdt/errors.hpp"

namespace gcdt {

namespace {

bool chunk_ends(const Tag& prev, const Tag& cur) {
  if (prev.prefix == 'E' || prev.prefix == 'S') return true;
  if ((prev.prefix == 'B' || prev.prefix == 'I') &&
      (cur.prefix == 'B' || cur.prefix == 'S' || cur.prefix == 'O')) {
    return true;
  }
  return prev.prefix != 'O' && prev.type != cur.type;
}

bool chunk_starts(const Tag& prev, const Tag& cur) {
  if (cur.prefix == 'B' || cur.prefix == 'S') return true;
  if ((cur.prefix == 'I' || cur.prefix == 'E') &&
      (prev.prefix == 'E' || prev.prefix == 'S' || prev.prefix == 'O')) {
    return true;
  }
  return cur.prefix != 'O' && prev.type != cur.type;
}

}  // namespace

std::vector<ChunkSpan> extract_chunks(const std::vector<std::string>& labels) {
  std::vector<ChunkSpan> spans;
  Tag prev;
  bool open = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    const Tag cur = i < labels.size() ? split_tag(labels[i]) : Tag{};
    if (open && chunk_ends(prev, cur)) {
      spans.push_back({prev.type, start, i - 1});
      open = false;
    }
    if (i < labels.size() && chunk_starts(prev, cur)) {
      open = true;
      start = i;
    }
    prev = cur;
  }
  std::sort(spans.begin(), spans.end());
  return spans;
}

double ChunkCounts::precision() const {
  return predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
}

double ChunkCounts::recall() const {
  return gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
}

double ChunkCounts::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

double EvalReport::accuracy() const {
  return tokens == 0 ? 0.0 : static_cast<double>(correct_tags) / static_cast<double>(tokens);
}

EvalReport evaluate(const std::vector<std::vector<std::string>>& gold,
                    const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw DataError("evaluate: " + std::to_string(gold.size()) + " gold sentences but " +
                    std::to_string(pred.size()) + " predicted");
  }
  EvalReport report;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != pred[s].size()) {
      throw DataError("evaluate: sentence " + std::to_string(s) + " has " +
                      std::to_string(gold[s].size()) + " gold labels but " +
                      std::to_string(pred[s].size()) + " predicted");
    }
    const auto g = extract_chunks(gold[s]);
    const auto p = extract_chunks(pred[s]);
    for (const auto& span : g) {
      ++report.overall.gold;
      ++report.per_type[span.type].gold;
    }
    for (const auto& span : p) {
      ++report.overall.predicted;
      ++report.per_type[span.type].predicted;
    }
    std::vector<ChunkSpan> both;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(both));
    for (const auto& span : both) {
      ++report.overall.correct;
      ++report.per_type[span.type].correct;
    }
    report.tokens += gold[s].size();
    for (std::size_t t = 0; t < gold[s].size(); ++t) {
      if (gold[s][t] == pred[s][t]) ++report.correct_tags;
    }
  }
  return report;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  char buf[256];
  out << "processed " << r.tokens << " tokens with " << r.overall.gold << " phrases; found: "
      << r.overall.predicted << " phrases; correct: " << r.overall.correct << ".\n";
  if (r.tokens > 0) {
    std::snprintf(buf, sizeof buf, "accuracy: %6.2f%%; precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f\n",
                  100 * r.accuracy(), 100 * r.overall.precision(), 100 * r.overall.recall(),
                  100 * r.overall.f1());
    out << buf;
  }
  for (const auto& [type, c] : r.per_type) {
    std::snprintf(buf, sizeof buf, "%17s: precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f  %zu\n",
                  type.c_str(), 100 * c.precision(), 100 * c.recall(), 100 * c.f1(), c.predicted);
    out << buf;
  }
  return out.str();
}

EvalReport evaluate_columns(std::istream& in) {
  std::vector<std::vector<std::string>> gold(1), pred(1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty() || cols[0] == "-DOCSTART-") {
      if (!gold.back().empty()) {
        gold.emplace_back();
        pred.emplace_back();
      }
      continue;
    }
    if (cols.size() < 3) {
      throw DataError("eval: line " + std::to_string(line_no) + " has " +
                      std::to_string(cols.size()) + " columns, need at least 3");
    }
    try {
      split_tag(cols[cols.size() - 2]);
      split_tag(cols.back());
    } catch (const DataError& e) {
      throw DataError("eval: line " + std::to_string(line_no) + ": " + e.what());
    }
    gold.back().push_back(cols[cols.size() - 2]);
    pred.back().push_back(cols.back());
  }
  if (gold.back().empty()) {
    gold.pop_back();
    pred.pop_back();
  }
  return evaluate(gold, pred);
}

}  // namespace gcdt
