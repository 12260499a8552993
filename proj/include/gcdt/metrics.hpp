// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace gcdt {

// Inclusive token span of one typed chunk.
struct ChunkSpan {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const ChunkSpan&) const = default;
};

// Chunk boundaries follow conlleval: a chunk opens at B/S, or at I/E after
// O, after a closed chunk, or on a type change; it closes at E/S or before
// an opening tag, a type change, or O. Accepts BIO2 as well as BIOES input,
// including structurally invalid sequences. Spans come back sorted.
std::vector<ChunkSpan> extract_chunks(const std::vector<std::string>& labels);

struct ChunkCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;

  // 0 when nothing was predicted / nothing is gold, as conlleval reports it.
  double precision() const;
  double recall() const;
  double f1() const;
};

struct EvalReport {
  ChunkCounts overall;
  std::map<std::string, ChunkCounts> per_type;  // sorted by type
  std::size_t tokens = 0;
  std::size_t correct_tags = 0;

  double accuracy() const;
};

// Exact type+boundary span matching. Sentence i of pred must have the same
// length as sentence i of gold.
EvalReport evaluate(const std::vector<std::vector<std::string>>& gold,
                    const std::vector<std::vector<std::string>>& pred);

// The conlleval text layout: summary lines then one line per type.
std::string format_report(const EvalReport& report);

// Reads "... gold predicted" column files (last two columns), blank line
// between sentences, and evaluates them.
EvalReport evaluate_columns(std::istream& in);

}  // namespace gcdt
