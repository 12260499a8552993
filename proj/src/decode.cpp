// SPDX-License-Identifier: Apache-2.0
#include "gcdt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gcdt/errors.hpp"

namespace gcdt {

namespace {

struct Hypothesis {
  std::vector<int> labels;
  double score = 0.0;
  Tensor state;  // 1 x decoder_hidden
};

Tensor repeat_row(const Tensor& source, std::size_t row, std::size_t times) {
  const std::size_t n = source.cols();
  Tensor out = Tensor::matrix(times, n);
  for (std::size_t k = 0; k < times; ++k)
    std::copy_n(&source.data()[row * n], n, &out.data()[k * n]);
  return out;
}

Tensor stack_rows(const std::vector<Hypothesis>& hyps) {
  const std::size_t n = hyps[0].state.cols();
  Tensor out = Tensor::matrix(hyps.size(), n);
  for (std::size_t k = 0; k < hyps.size(); ++k)
    std::copy_n(hyps[k].state.data().begin(), n, &out.data()[k * n]);
  return out;
}

Tensor take_row(const Tensor& m, std::size_t row) {
  const std::size_t n = m.cols();
  Tensor out = Tensor::matrix(1, n);
  std::copy_n(&m.data()[row * n], n, out.data().begin());
  return out;
}

}  // namespace

std::vector<EncodedSentence> encode_for_inference(const Model& model, const Batch& batch,
                                                  const ExternalRows* external) {
  ad::Graph g(false);
  const Encoded enc = model.encode(g, batch, external, RunMode{});
  std::vector<EncodedSentence> out(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    const std::size_t len = batch.lengths[b];
    const std::size_t width = enc.states[0].cols();
    out[b].states = Tensor::matrix(len, width);
    for (std::size_t t = 0; t < len; ++t)
      std::copy_n(&enc.states[t].value().data()[b * width], width, &out[b].states.data()[t * width]);
    if (enc.global) out[b].global = take_row(enc.global.value(), b);
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& logits) {
  const std::size_t m = logits.rows(), n = logits.cols();
  Tensor out = logits;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) row[j] -= lse;
  }
  return out;
}

Decoded greedy_decode(const Model& model, const EncodedSentence& sentence) {
  const std::size_t dh = model.config().decoder_hidden;
  Decoded out;
  ad::Var state = ad::Graph::constant(Tensor::matrix(1, dh));
  const ad::Var global = sentence.global.empty() ? ad::Var() : ad::Graph::constant(sentence.global);
  int prev = model.start_label();
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    ad::Graph g(false);
    const int prev_ids[] = {prev};
    DecoderStep step = model.decode_step(g, ad::Graph::constant(take_row(sentence.states, t)),
                                         prev_ids, state, global);
    const Tensor lp = log_softmax_rows(step.logits.value());
    std::size_t best = 0;
    for (std::size_t j = 1; j < lp.cols(); ++j)
      if (lp[j] > lp[best]) best = j;
    out.labels.push_back(static_cast<int>(best));
    out.score += lp[best];
    prev = static_cast<int>(best);
    state = step.state;
  }
  return out;
}

Decoded beam_search(const Model& model, const EncodedSentence& sentence, std::size_t beam) {
  if (beam < 1) throw std::invalid_argument("beam_search: beam width must be at least 1");
  const std::size_t dh = model.config().decoder_hidden;
  const std::size_t m = model.label_count();
  std::vector<Hypothesis> hyps(1);
  hyps[0].state = Tensor::matrix(1, dh);

  struct Candidate {
    double score;
    std::size_t parent;
    int label;
  };
  for (std::size_t t = 0; t < sentence.size(); ++t) {
    const std::size_t k = hyps.size();
    ad::Graph g(false);
    std::vector<int> prev(k);
    for (std::size_t i = 0; i < k; ++i) prev[i] = t == 0 ? model.start_label() : hyps[i].labels.back();
    const ad::Var global =
        sentence.global.empty() ? ad::Var() : ad::Graph::constant(repeat_row(sentence.global, 0, k));
    DecoderStep step = model.decode_step(g, ad::Graph::constant(repeat_row(sentence.states, t, k)), prev,
                                         ad::Graph::constant(stack_rows(hyps)), global);
    const Tensor lp = log_softmax_rows(step.logits.value());

    std::vector<Candidate> cands;
    cands.reserve(k * m);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < m; ++j)
        cands.push_back({hyps[i].score + lp.at(i, j), i, static_cast<int>(j)});
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [&](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.label != b.label) return a.label < b.label;
                        return hyps[a.parent].labels < hyps[b.parent].labels;
                      });
    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis h;
      h.labels = hyps[cands[c].parent].labels;
      h.labels.push_back(cands[c].label);
      h.score = cands[c].score;
      h.state = take_row(step.state.value(), cands[c].parent);
      next.push_back(std::move(h));
    }
    hyps = std::move(next);
  }
  const auto best = std::min_element(hyps.begin(), hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.labels < b.labels;
  });
  return {best->labels, best->score};
}

std::vector<std::vector<int>> predict(const Model& model, const std::vector<Sentence>& corpus,
                                      const Vocabulary& words, const Vocabulary& labels,
                                      const ExternalRows* external, std::size_t beam,
                                      std::size_t token_budget) {
  std::vector<std::vector<int>> out(corpus.size());
  if (corpus.empty()) return out;
  std::size_t longest = 0;
  for (const auto& s : corpus) longest = std::max(longest, s.size());
  Rng unused(0);
  const std::size_t min_chars = model.config().use_char ? model.config().char_filter_width : 1;
  for (const auto& group : plan_batches(corpus, std::max(token_budget, longest), unused, false)) {
    const Batch batch = build_batch(corpus, group, words, labels, min_chars);
    const auto encoded = encode_for_inference(model, batch, external);
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      const Decoded d = beam == 1 ? greedy_decode(model, encoded[b]) : beam_search(model, encoded[b], beam);
      out[batch.sentence_index[b]] = d.labels;
    }
  }
  return out;
}

std::vector<std::vector<std::string>> predict_labels(const Model& model,
                                                     const std::vector<Sentence>& corpus,
                                                     const Vocabulary& words,
                                                     const Vocabulary& labels,
                                                     const ExternalRows* external,
                                                     std::size_t beam, std::size_t token_budget) {
  std::vector<std::vector<std::string>> out;
  for (const auto& ids : predict(model, corpus, words, labels, external, beam, token_budget)) {
    std::vector<std::string> row;
    for (int id : ids) row.push_back(labels.decode(id));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace gcdt
