// SPDX-License-Identifier: Apache-2.0
#include "gcdt/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

#include "gcdt/cells.hpp"
#include "gcdt/embeddings.hpp"
#include "gcdt/model.hpp"
#include "gcdt/params.hpp"
#include "gcdt/synthetic.hpp"

namespace gcdt {

namespace {

constexpr std::size_t kSampledCoords = 12;

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& x : t.data()) x = rng.uniform(-scale, scale);
  return t;
}

// Biases start at zero; perturb everything so no gate sits at a symmetric point.
void jitter(ParamStore& store, Rng& rng) {
  for (const auto& e : store.entries()) {
    ad::Var v = e.var;
    for (auto& x : v.mutable_value().data()) x = rng.uniform(-0.6, 0.6);
  }
}

std::vector<ad::Var> trainable(const ParamStore& store) {
  std::vector<ad::Var> out;
  for (const auto& e : store.entries())
    if (e.trainable) out.push_back(e.var);
  return out;
}

// Weighted sum so every output coordinate carries a distinct sensitivity.
ad::Var readout(ad::Graph& g, const ad::Var& y, const Tensor& weights) {
  return g.sum(g.mul_const(y, weights));
}

ad::GradCheckResult check_cell(const std::string& component, Rng& rng) {
  ParamStore store;
  const std::size_t batch = dim(rng, 1, 3);
  const std::size_t hidden = dim(rng, 2, 8);
  const std::size_t input = dim(rng, 2, 8);
  std::function<ad::Var(ad::Graph&, const ad::Var&, const ad::Var&)> step;
  if (component == "lgru") {
    auto p = make_lgru(store, "cell", input, hidden, rng);
    step = [p](ad::Graph& g, const ad::Var& x, const ad::Var& h) { return lgru_step(g, x, h, p); };
  } else if (component == "tgru") {
    auto p = make_tgru(store, "cell", hidden, rng);
    step = [p](ad::Graph& g, const ad::Var&, const ad::Var& h) { return tgru_step(g, h, p); };
  } else if (component == "dt_block") {
    auto p = make_dt_block(store, "cell", input, hidden, 4, rng);
    step = [p](ad::Graph& g, const ad::Var& x, const ad::Var& h) { return dt_step(g, x, h, p); };
  } else {
    auto p = make_gru(store, "cell", input, hidden, rng);
    step = [p](ad::Graph& g, const ad::Var& x, const ad::Var& h) { return gru_step(g, x, h, p); };
  }
  jitter(store, rng);
  ad::Var x(random_tensor(batch, input, rng), true);
  ad::Var h(random_tensor(batch, hidden, rng), true);
  const Tensor weights = random_tensor(batch, hidden, rng);
  auto vars = trainable(store);
  vars.push_back(x);
  vars.push_back(h);
  return ad::finite_diff_check_params(
      [&](ad::Graph& g) { return readout(g, step(g, x, h), weights); }, vars);
}

ad::GradCheckResult check_char_cnn(Rng& rng) {
  ParamStore store;
  CharCNN cnn;
  cnn.width = dim(rng, 1, 3);
  const std::size_t chars_vocab = dim(rng, 3, 8), char_dim = dim(rng, 2, 5), filters = dim(rng, 2, 6);
  cnn.table = store.add("char.table", glorot_uniform(chars_vocab, char_dim, rng));
  cnn.filters = store.add("char.filters", glorot_uniform(cnn.width * char_dim, filters, rng));
  cnn.bias = store.add("char.bias", Tensor::matrix(1, filters));
  jitter(store, rng);
  const std::size_t words = dim(rng, 1, 4);
  const std::size_t chars = cnn.width + dim(rng, 0, 4);
  std::vector<int> ids(words * chars, 0), lengths(words);
  for (std::size_t w = 0; w < words; ++w) {
    lengths[w] = static_cast<int>(dim(rng, 1, chars));
    for (int c = 0; c < lengths[w]; ++c) ids[w * chars + c] = static_cast<int>(dim(rng, 1, chars_vocab - 1));
  }
  const Tensor weights = random_tensor(words, filters, rng);
  auto vars = trainable(store);
  return ad::finite_diff_check_params(
      [&](ad::Graph& g) { return readout(g, char_cnn_forward(g, cnn, ids, words, chars, lengths), weights); },
      vars);
}

ModelConfig toy_config(Rng& rng, std::size_t variant) {
  ModelConfig c;
  c.encoder_hidden = dim(rng, 2, 5);
  c.global_hidden = dim(rng, 2, 4);
  c.decoder_hidden = dim(rng, 2, 5);
  c.label_embed_dim = dim(rng, 2, 4);
  c.transition_count = dim(rng, 1, 2);
  c.char_embed_dim = dim(rng, 2, 4);
  c.char_filter_width = dim(rng, 1, 3);
  c.char_filters = dim(rng, 2, 5);
  c.word_dim = dim(rng, 2, 5);
  c.dropout_embed = 0.0;
  c.dropout_hidden = 0.0;
  c.global_position = static_cast<GlobalPosition>(variant % 4);
  c.use_global = c.global_position != GlobalPosition::kNone;
  c.cell_kind = (variant / 4) % 2 == 0 ? CellKind::kDt : CellKind::kGru;
  c.global_pooling = (variant / 2) % 2 == 0 ? ad::Pool::kMean : ad::Pool::kMax;
  return c;
}

ad::GradCheckResult check_decoder_step(Rng& rng, std::size_t variant) {
  ModelConfig c = toy_config(rng, variant);
  const std::size_t labels = dim(rng, 2, 5);
  Model model(c, 6, 6, labels, rng);
  jitter(model.params(), rng);
  const std::size_t rows = dim(rng, 1, 3);
  ad::Var h(random_tensor(rows, 2 * c.encoder_hidden, rng), true);
  ad::Var state(random_tensor(rows, c.decoder_hidden, rng), true);
  ad::Var global;
  if (c.use_global) global = ad::Var(random_tensor(rows, 2 * c.global_hidden, rng), true);
  std::vector<int> prev(rows), targets(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    prev[r] = static_cast<int>(rng.below(labels + 1));
    targets[r] = static_cast<int>(rng.below(labels));
  }
  const std::vector<double> ones(rows, 1.0);
  const Tensor weights = random_tensor(rows, c.decoder_hidden, rng);
  auto vars = trainable(model.params());
  vars.push_back(h);
  vars.push_back(state);
  if (global) vars.push_back(global);
  return ad::finite_diff_check_params(
      [&](ad::Graph& g) {
        const DecoderStep out = model.decode_step(g, h, prev, state, global);
        return g.add(g.softmax_cross_entropy(out.logits, targets, ones), readout(g, out.state, weights));
      },
      vars);
}

ad::GradCheckResult check_model_loss(Rng& rng, std::size_t variant) {
  ModelConfig c = toy_config(rng, variant);
  SyntheticSpec spec;
  spec.sentences = dim(rng, 1, 3);
  spec.vocab = 12;
  spec.types = 2;
  spec.min_len = 1;
  spec.max_len = 4;
  spec.max_chunk = 2;
  std::vector<Sentence> corpus = synthetic_corpus(spec, rng);
  const Vocabulary words = build_word_vocab({&corpus});
  const Vocabulary chars = build_char_vocab(corpus);
  const Vocabulary labels = build_label_vocab({&corpus});
  attach_char_ids(corpus, chars);
  std::vector<std::size_t> members(corpus.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
  const Batch batch = build_batch(corpus, members, words, labels, c.char_filter_width);
  Model model(c, words.size(), chars.size(), labels.size(), rng);
  jitter(model.params(), rng);
  auto vars = trainable(model.params());
  return ad::finite_diff_check_params(
      [&](ad::Graph& g) { return model.loss(g, batch, nullptr, RunMode{}).loss; }, vars, 1e-5,
      kSampledCoords, &rng);
}

}  // namespace

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names = {"lgru",     "tgru",         "dt_block",  "gru",
                                                 "char_cnn", "decoder_step", "model_loss"};
  return names;
}

ComponentCheck check_component(const std::string& component, std::uint64_t base_seed,
                               std::size_t seeds, double tolerance) {
  const auto& names = gradcheck_components();
  if (std::find(names.begin(), names.end(), component) == names.end()) {
    throw std::invalid_argument("gradcheck: unknown component '" + component + "'");
  }
  ComponentCheck out;
  out.component = component;
  out.seeds = seeds;
  for (std::size_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = base_seed + i;
    Rng rng(seed);
    ad::GradCheckResult r;
    if (component == "char_cnn") r = check_char_cnn(rng);
    else if (component == "decoder_step") r = check_decoder_step(rng, i);
    else if (component == "model_loss") r = check_model_loss(rng, i);
    else r = check_cell(component, rng);
    out.coordinates += r.coordinates;
    if (i == 0 || r.max_rel_error > out.max_rel_error) {
      out.max_rel_error = r.max_rel_error;
      out.worst_seed = seed;
    }
  }
  out.passed = out.max_rel_error <= tolerance;
  return out;
}

std::vector<ComponentCheck> run_gradient_suite(std::uint64_t base_seed, std::size_t seeds,
                                               double tolerance) {
  std::vector<ComponentCheck> out;
  for (const auto& name : gradcheck_components()) out.push_back(check_component(name, base_seed, seeds, tolerance));
  return out;
}

}  // namespace gcdt
