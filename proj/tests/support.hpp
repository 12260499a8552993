// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "gcdt/decode.hpp"
#include "gcdt/model.hpp"
#include "gcdt/pipeline.hpp"
#include "gcdt/synthetic.hpp"

namespace gcdt::testing {

// Closed-form trainable parameter count, written from the cell equations
// rather than from the registry.
inline std::size_t cell_params(CellKind kind, std::size_t in, std::size_t h, std::size_t transitions) {
  if (kind == CellKind::kGru) return 3 * in * h + 3 * h * h + 3 * h;
  const std::size_t lgru = 5 * in * h + 4 * h * h + 4 * h;
  const std::size_t tgru = 3 * h * h + 3 * h;
  return lgru + transitions * tgru;
}

inline std::size_t expected_param_count(const ModelConfig& c, std::size_t chars, std::size_t labels) {
  const std::size_t L = c.transition_count;
  const std::size_t g2 = 2 * c.global_hidden;
  std::size_t lexical = 0;
  if (c.use_char) lexical += c.char_filters;
  if (c.use_pretrained) lexical += c.word_dim;
  std::size_t total = 0;
  if (c.use_char) total += chars * c.char_embed_dim + c.char_filter_width * c.char_embed_dim * c.char_filters + c.char_filters;
  if (c.use_global) total += 2 * cell_params(c.cell_kind, lexical > 0 ? lexical : c.external_dim, c.global_hidden, L);
  std::size_t token = lexical + (c.use_external ? c.external_dim : 0);
  if (c.global_position == GlobalPosition::kEncoderInput) token += g2;
  total += 2 * cell_params(c.cell_kind, token, c.encoder_hidden, L);
  std::size_t dec_in = 2 * c.encoder_hidden + c.label_embed_dim;
  if (c.global_position == GlobalPosition::kDecoderInput) dec_in += g2;
  total += cell_params(c.cell_kind, dec_in, c.decoder_hidden, L);
  total += (labels + 1) * c.label_embed_dim;
  const std::size_t out_in = c.decoder_hidden + (c.global_position == GlobalPosition::kSoftmaxInput ? g2 : 0);
  total += out_in * labels + labels;
  return total;
}

// Small config for fast model tests.
inline ModelConfig tiny_config(std::size_t hidden = 4) {
  ModelConfig c;
  c.encoder_hidden = hidden;
  c.decoder_hidden = hidden;
  c.global_hidden = hidden;
  c.label_embed_dim = 3;
  c.transition_count = 2;
  c.char_embed_dim = 3;
  c.char_filters = 4;
  c.word_dim = 4;
  c.beam_size = 3;
  return c;
}

// Teacher-forced sequence log-probability of `labels` under the decoder.
inline double sequence_score(const Model& model, const EncodedSentence& sent, const std::vector<int>& labels) {
  ad::Graph g(false);
  ad::Var state = ad::Graph::constant(Tensor::matrix(1, model.config().decoder_hidden));
  ad::Var global;
  if (!sent.global.empty()) global = ad::Graph::constant(sent.global);
  int prev = model.start_label();
  double score = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    Tensor row = Tensor::matrix(1, sent.states.cols());
    for (std::size_t j = 0; j < row.cols(); ++j) row.at(0, j) = sent.states.at(t, j);
    const std::vector<int> p{prev};
    const DecoderStep step = model.decode_step(g, ad::Graph::constant(row), p, state, global);
    score += log_softmax_rows(step.logits.value()).at(0, static_cast<std::size_t>(labels[t]));
    state = step.state;
    prev = labels[t];
  }
  return score;
}

// Brute-force argmax over all label^length sequences. Ties keep the first
// sequence in lexicographic order.
inline Decoded exhaustive_decode(const Model& model, const EncodedSentence& sent) {
  const std::size_t n = sent.size(), m = model.label_count();
  std::vector<int> seq(n, 0);
  Decoded best;
  best.score = -std::numeric_limits<double>::infinity();
  for (;;) {
    const double s = sequence_score(model, sent, seq);
    if (s > best.score) best = {seq, s};
    std::size_t i = n;
    while (i > 0 && static_cast<std::size_t>(seq[i - 1]) + 1 == m) seq[--i] = 0;
    if (i == 0) break;
    ++seq[i - 1];
  }
  return best;
}

inline std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp--) r *= base;
  return r;
}

}  // namespace gcdt::testing
