// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "gcdt/conll.hpp"

namespace gcdt {

struct SyntheticSpec {
  std::size_t sentences = 50;
  std::size_t vocab = 100;  // half plain words, half split evenly across types
  std::size_t types = 5;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  std::size_t max_chunk = 3;
};

// Tokens "w<id>" with BIOES labels. Entity words belong to exactly one type
// and chunks are separated by at least one plain word, so every label is a
// function of the token and its neighbours.
std::vector<Sentence> synthetic_corpus(const SyntheticSpec& spec, Rng& rng);

}  // namespace gcdt
