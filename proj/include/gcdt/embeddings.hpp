// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gcdt/autodiff.hpp"
#include "gcdt/conll.hpp"
#include "gcdt/tensor.hpp"

namespace gcdt {

// Word vectors indexed by a word vocabulary. The PAD row is zero.
struct PretrainedTable {
  ad::Var matrix;  // V x dim
  bool frozen = true;

  std::size_t dim() const { return matrix.cols(); }
};

// Rows absent from a pretrained file: uniform in +-sqrt(3 / dim).
Tensor random_word_rows(std::size_t rows, std::size_t dim, Rng& rng);

// Every row drawn from random_word_rows except PAD.
PretrainedTable random_pretrained(std::size_t rows, std::size_t dim, Rng& rng,
                                  bool frozen = true);

// Lines are "word v1 ... v_dim". Vocabulary words found in the file take its
// vector; the rest are drawn from random_word_rows. Words not in the
// vocabulary are skipped. A line with the wrong component count throws
// DataError naming the line.
PretrainedTable load_pretrained(std::istream& in, std::size_t dim, const Vocabulary& vocab,
                                Rng& rng, bool frozen = true);

// One convolution layer over character embeddings, max-pooled over positions.
struct CharCNN {
  ad::Var table;    // chars x char_dim
  ad::Var filters;  // (width * char_dim) x filter_count
  ad::Var bias;     // 1 x filter_count
  std::size_t width = 3;

  std::size_t filter_count() const { return filters.cols(); }
  std::size_t char_dim() const { return table.cols(); }
};

// char_ids is words x chars row-major, chars >= width, PAD-filled past each
// word's length. Windows are "valid" convolutions; a word of length n pools
// over the max(n, width) - width + 1 windows that start inside it, so the
// result does not depend on how far the batch pads. Empty lengths means
// every window counts. Returns words x filter_count.
ad::Var char_cnn_forward(ad::Graph& g, const CharCNN& cnn, std::span<const int> char_ids,
                         std::size_t words, std::size_t chars, std::span<const int> lengths = {});

enum class SubtokenPool { kFirst, kMean, kMax };
SubtokenPool parse_subtoken_pool(const std::string& name);

// Sub-token vectors of one sentence plus the token each belongs to.
struct ExternalSentence {
  Tensor subtokens;                   // S x dim
  std::vector<std::size_t> token_of;  // size S
  std::size_t tokens = 0;
};

struct ExternalEmbeddingSet {
  std::vector<ExternalSentence> sentences;
  SubtokenPool mode = SubtokenPool::kMean;
  std::size_t dim = 0;
};

// tokens x dim; throws DataError when a token has no sub-tokens.
Tensor align_external(const ExternalSentence& sentence, SubtokenPool mode);
std::vector<Tensor> align_external(const ExternalEmbeddingSet& set);

// Text format, one record per sentence:
//   sentence <tokens> <subtokens> <dim>
//   <token-index> v1 ... v_dim        (repeated <subtokens> times)
// Blank lines and lines starting with '#' are ignored.
ExternalEmbeddingSet read_external(std::istream& in, SubtokenPool mode);
void write_external(std::ostream& out, const ExternalEmbeddingSet& set);

}  // namespace gcdt
