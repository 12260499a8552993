// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "gcdt/conll.hpp"
#include "gcdt/model.hpp"

namespace gcdt {

// Encoder output for one sentence, detached from any graph.
struct EncodedSentence {
  Tensor states;  // length x 2*encoder_hidden
  Tensor global;  // 1 x 2*global_hidden, empty without use_global

  std::size_t size() const { return states.rows(); }
};

// Evaluation-mode encoding of every sentence in a batch, in batch order.
std::vector<EncodedSentence> encode_for_inference(const Model& model, const Batch& batch,
                                                  const ExternalRows* external);

struct Decoded {
  std::vector<int> labels;
  double score = 0.0;  // summed log-probabilities
};

// Row-wise log-softmax of a logits matrix.
Tensor log_softmax_rows(const Tensor& logits);

// Argmax label at each step, fed back as the next step's previous label.
// Ties go to the smaller label id.
Decoded greedy_decode(const Model& model, const EncodedSentence& sentence);

// Keeps the `beam` best prefixes by summed log-probability. Ties are broken
// by the smaller newest label id, then the lexicographically smaller prefix.
// Throws std::invalid_argument when beam < 1.
Decoded beam_search(const Model& model, const EncodedSentence& sentence, std::size_t beam);

// Label ids for every corpus sentence, in corpus order. beam == 1 decodes
// greedily.
std::vector<std::vector<int>> predict(const Model& model, const std::vector<Sentence>& corpus,
                                      const Vocabulary& words, const Vocabulary& labels,
                                      const ExternalRows* external, std::size_t beam,
                                      std::size_t token_budget = 4096);

std::vector<std::vector<std::string>> predict_labels(const Model& model,
                                                     const std::vector<Sentence>& corpus,
                                                     const Vocabulary& words,
                                                     const Vocabulary& labels,
                                                     const ExternalRows* external,
                                                     std::size_t beam,
                                                     std::size_t token_budget = 4096);

}  // namespace gcdt
