// SPDX-License-Identifier: Apache-2.0
#include "gcdt/model.hpp"

#include "gcdt/errors.hpp"

namespace gcdt {

GlobalPosition parse_global_position(const std::string& name) {
  if (name == "encoder_input") return GlobalPosition::kEncoderInput;
  if (name == "decoder_input") return GlobalPosition::kDecoderInput;
  if (name == "softmax_input") return GlobalPosition::kSoftmaxInput;
  if (name == "none") return GlobalPosition::kNone;
  throw ConfigError("unknown global_position '" + name + "'");
}

const char* global_position_name(GlobalPosition pos) {
  switch (pos) {
    case GlobalPosition::kEncoderInput: return "encoder_input";
    case GlobalPosition::kDecoderInput: return "decoder_input";
    case GlobalPosition::kSoftmaxInput: return "softmax_input";
    case GlobalPosition::kNone: break;
  }
  return "none";
}

ad::Pool parse_pooling(const std::string& name) {
  if (name == "mean") return ad::Pool::kMean;
  if (name == "max") return ad::Pool::kMax;
  throw ConfigError("unknown global_pooling '" + name + "'");
}

const char* pooling_name(ad::Pool pool) { return pool == ad::Pool::kMean ? "mean" : "max"; }

void ModelConfig::validate() const {
  if (!use_char && !use_pretrained && !use_external) {
    throw ConfigError("model: at least one of use_char, use_pretrained, use_external must be set");
  }
  if (use_global != (global_position != GlobalPosition::kNone)) {
    throw ConfigError("model: use_global must be false exactly when global_position is none");
  }
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(std::string("model: ") + key + " must be positive");
  };
  positive(encoder_hidden, "encoder_hidden");
  positive(decoder_hidden, "decoder_hidden");
  positive(label_embed_dim, "label_embed_dim");
  positive(beam_size, "beam_size");
  if (use_global) positive(global_hidden, "global_hidden");
  if (use_char) {
    positive(char_embed_dim, "char_embed_dim");
    positive(char_filter_width, "char_filter_width");
    positive(char_filters, "char_filters");
  }
  if (use_pretrained) positive(word_dim, "word_dim");
  if (use_external) positive(external_dim, "external_dim");
  for (double rate : {dropout_embed, dropout_hidden}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("model: dropout rates must lie in [0, 1)");
  }
}

std::size_t ModelConfig::token_dim() const {
  std::size_t d = 0;
  if (use_char) d += char_filters;
  if (use_pretrained) d += word_dim;
  if (use_external) d += external_dim;
  if (global_position == GlobalPosition::kEncoderInput) d += 2 * global_hidden;
  return d;
}

std::size_t ModelConfig::global_input_dim() const {
  std::size_t d = 0;
  if (use_char) d += char_filters;
  if (use_pretrained) d += word_dim;
  return d > 0 ? d : external_dim;
}

Model::Model(ModelConfig config, std::size_t word_vocab, std::size_t char_vocab,
             std::size_t labels, Rng& rng, std::optional<PretrainedTable> pretrained)
    : config_(config), labels_(labels) {
  config_.validate();
  if (labels_ == 0) throw ConfigError("model: label inventory is empty");
  const ModelConfig& c = config_;
  const std::size_t L = c.transition_count;

  if (c.use_char) {
    CharCNN cnn;
    cnn.width = c.char_filter_width;
    cnn.table = store_.add("char.table", glorot_uniform(char_vocab, c.char_embed_dim, rng));
    cnn.filters = store_.add("char.filters",
                             glorot_uniform(c.char_filter_width * c.char_embed_dim, c.char_filters, rng));
    cnn.bias = store_.add("char.bias", Tensor::matrix(1, c.char_filters));
    char_cnn_ = cnn;
  }
  if (c.use_global) {
    const std::size_t in = c.global_input_dim();
    global_fwd_ = make_recurrent(store_, "global.fwd", c.cell_kind, in, c.global_hidden, L, rng);
    global_bwd_ = make_recurrent(store_, "global.bwd", c.cell_kind, in, c.global_hidden, L, rng);
  }
  encoder_fwd_ = make_recurrent(store_, "encoder.fwd", c.cell_kind, c.token_dim(), c.encoder_hidden, L, rng);
  encoder_bwd_ = make_recurrent(store_, "encoder.bwd", c.cell_kind, c.token_dim(), c.encoder_hidden, L, rng);
  std::size_t decoder_in = 2 * c.encoder_hidden + c.label_embed_dim;
  if (c.global_position == GlobalPosition::kDecoderInput) decoder_in += 2 * c.global_hidden;
  decoder_ = make_recurrent(store_, "decoder", c.cell_kind, decoder_in, c.decoder_hidden, L, rng);
  label_table_ = store_.add("label.table", glorot_uniform(labels_ + 1, c.label_embed_dim, rng));
  std::size_t out_in = c.decoder_hidden;
  if (c.global_position == GlobalPosition::kSoftmaxInput) out_in += 2 * c.global_hidden;
  out_w_ = store_.add("output.w", glorot_uniform(out_in, labels_, rng));
  out_b_ = store_.add("output.b", Tensor::matrix(1, labels_));
  if (c.use_pretrained) {
    if (!pretrained) pretrained = random_pretrained(word_vocab, c.word_dim, rng);
    if (pretrained->matrix.rows() != word_vocab || pretrained->dim() != c.word_dim) {
      throw ConfigError("model: word table " + shape_str(pretrained->matrix.shape()) +
                        " does not match vocabulary " + std::to_string(word_vocab) + " x word_dim " +
                        std::to_string(c.word_dim));
    }
    words_ = std::move(pretrained);
    store_.add_existing("word.table", words_->matrix, !words_->frozen);
  }
}

}  // namespace gcdt

namespace gcdt {

std::vector<std::pair<std::string, std::size_t>> Model::param_breakdown() const {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& e : store_.entries()) {
    if (!e.trainable) continue;
    const std::string component = e.name.substr(0, e.name.find('.'));
    if (out.empty() || out.back().first != component) out.emplace_back(component, 0);
    out.back().second += e.var.size();
  }
  return out;
}

std::vector<ad::RowMask> Model::live_masks(const Batch& batch) {
  std::vector<ad::RowMask> live(batch.max_len, ad::RowMask(batch.batch_size, 0));
  for (std::size_t t = 0; t < batch.max_len; ++t)
    for (std::size_t b = 0; b < batch.batch_size; ++b) live[t][b] = batch.live(b, t) ? 1 : 0;
  return live;
}

Model::Local Model::local_features(ad::Graph& g, const Batch& batch,
                                   const ExternalRows* external) const {
  const std::size_t B = batch.batch_size, T = batch.max_len, C = batch.max_chars;
  Local local;
  ad::Var chars;
  if (char_cnn_) {
    // Rows ordered step-major (t * B + b) so each step is a contiguous slice.
    std::vector<int> ids(T * B * C), lengths(T * B);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t src = b * T + t, dst = t * B + b;
        std::copy_n(batch.char_ids.begin() + src * C, C, ids.begin() + dst * C);
        lengths[dst] = batch.char_lengths[src];
      }
    chars = char_cnn_forward(g, *char_cnn_, ids, T * B, C, lengths);
  }
  if (config_.use_external && !external) throw DataError("model: use_external set but no external rows given");
  std::vector<int> ids(B);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<ad::Var> parts;
    if (chars) parts.push_back(T == 1 ? chars : g.slice_rows(chars, t * B, (t + 1) * B));
    if (words_) {
      for (std::size_t b = 0; b < B; ++b) ids[b] = batch.word_ids[b * T + t];
      parts.push_back(g.gather(words_->matrix, ids));
    }
    if (!parts.empty()) local.lexical.push_back(parts.size() == 1 ? parts[0] : g.concat(parts));
    if (config_.use_external) {
      Tensor rows = Tensor::matrix(B, config_.external_dim);
      for (std::size_t b = 0; b < B; ++b) {
        if (!batch.live(b, t)) continue;
        const std::size_t s = batch.sentence_index[b];
        if (s >= external->size()) throw DataError("model: no external embedding for sentence " + std::to_string(s));
        const Tensor& src = (*external)[s];
        if (src.rows() != batch.lengths[b] || src.cols() != config_.external_dim) {
          throw DataError("model: external embedding for sentence " + std::to_string(s) + " is " +
                          shape_str(src.shape()) + ", expected " + std::to_string(batch.lengths[b]) +
                          " x " + std::to_string(config_.external_dim));
        }
        std::copy_n(&src.data()[t * src.cols()], src.cols(), &rows.data()[b * src.cols()]);
      }
      local.external.push_back(ad::Graph::constant(std::move(rows)));
    }
  }
  return local;
}

ad::Var Model::global_context_encode(ad::Graph& g, std::span<const ad::Var> inputs,
                                     std::span<const ad::RowMask> live, const RunMode& mode) const {
  if (!global_fwd_) throw std::logic_error("model: global encoder disabled");
  if (inputs.empty()) throw ShapeError("global_context_encode: empty sentence");
  const double keep = 1.0 - config_.dropout_embed;
  std::vector<ad::Var> dropped;
  dropped.reserve(inputs.size());
  for (const auto& x : inputs) dropped.push_back(mode.rng ? g.dropout(x, keep, *mode.rng, mode.training) : x);
  RecurrentDropout drop{mode.training, config_.dropout_hidden, config_.inner_dropout, mode.rng};
  const auto states = run_bidirectional(g, dropped, *global_fwd_, *global_bwd_, live, drop);
  return g.pool_steps(states, live, config_.global_pooling);
}

Encoded Model::encode(ad::Graph& g, const Batch& batch, const ExternalRows* external,
                      const RunMode& mode) const {
  if (batch.max_len == 0) throw ShapeError("encode: empty batch");
  if (mode.training && !mode.rng) throw std::invalid_argument("encode: training needs an rng");
  const auto live = live_masks(batch);
  Local local = local_features(g, batch, external);
  Encoded enc;
  if (config_.use_global) {
    enc.global = global_context_encode(g, local.lexical.empty() ? local.external : local.lexical, live, mode);
  }
  const double keep = 1.0 - config_.dropout_embed;
  std::vector<ad::Var> tokens;
  for (std::size_t t = 0; t < batch.max_len; ++t) {
    std::vector<ad::Var> parts;
    if (!local.lexical.empty()) parts.push_back(local.lexical[t]);
    if (!local.external.empty()) parts.push_back(local.external[t]);
    if (config_.global_position == GlobalPosition::kEncoderInput) {
      parts.push_back(enc.global);
      if (t == 0) enc.global_sites.push_back(GlobalPosition::kEncoderInput);
    }
    ad::Var x = parts.size() == 1 ? parts[0] : g.concat(parts);
    tokens.push_back(mode.rng ? g.dropout(x, keep, *mode.rng, mode.training) : x);
  }
  RecurrentDropout drop{mode.training, config_.dropout_hidden, config_.inner_dropout, mode.rng};
  enc.states = run_bidirectional(g, tokens, encoder_fwd_, encoder_bwd_, live, drop);
  return enc;
}

DecoderStep Model::decode_step(ad::Graph& g, const ad::Var& h, std::span<const int> prev_labels,
                               const ad::Var& state, const ad::Var& global,
                               const Tensor* dropout_mask) const {
  for (int id : prev_labels) {
    if (id < 0 || id > start_label()) {
      throw DataError("decode_step: unknown previous label id " + std::to_string(id));
    }
  }
  DecoderStep step;
  std::vector<ad::Var> parts{h, g.gather(label_table_, prev_labels)};
  if (config_.global_position == GlobalPosition::kDecoderInput) {
    if (!global) throw std::invalid_argument("decode_step: global embedding required");
    parts.push_back(global);
    step.global_sites.push_back(GlobalPosition::kDecoderInput);
  }
  step.state = recurrent_step(g, g.concat(parts), state, decoder_);
  if (dropout_mask) step.state = g.mul_const(step.state, *dropout_mask);
  ad::Var projected = step.state;
  if (config_.global_position == GlobalPosition::kSoftmaxInput) {
    if (!global) throw std::invalid_argument("decode_step: global embedding required");
    projected = g.concat({step.state, global});
    step.global_sites.push_back(GlobalPosition::kSoftmaxInput);
  }
  step.logits = g.add_bias(g.matmul(projected, out_w_), out_b_);
  return step;
}

ad::Var Model::masked_loss(ad::Graph& g, std::span<const ad::Var> logits, const Batch& batch) {
  if (logits.size() != batch.max_len) throw ShapeError("masked_loss: one logit matrix per step required");
  if (batch.tokens == 0) throw DataError("loss: batch has no tokens");
  const std::size_t B = batch.batch_size, T = batch.max_len;
  ad::Var total;
  std::vector<int> targets(B);
  std::vector<double> weights(B);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      const bool live = batch.live(b, t);
      targets[b] = live ? batch.label_ids[b * T + t] : 0;
      weights[b] = live ? 1.0 : 0.0;
      if (live && targets[b] < 0) {
        throw DataError("loss: sentence " + std::to_string(batch.sentence_index[b]) +
                        " has a label outside the model's inventory");
      }
    }
    ad::Var step = g.softmax_cross_entropy(logits[t], targets, weights);
    total = total ? g.add(total, step) : step;
  }
  return g.affine(total, 1.0 / static_cast<double>(batch.tokens), 0.0);
}

LossOutput Model::loss(ad::Graph& g, const Batch& batch, const ExternalRows* external,
                       const RunMode& mode) const {
  Encoded enc = encode(g, batch, external, mode);
  LossOutput out;
  out.global_sites = enc.global_sites;
  out.tokens = batch.tokens;
  const std::size_t B = batch.batch_size, T = batch.max_len;
  const auto live = live_masks(batch);
  Tensor mask;
  const bool drop = mode.training && config_.dropout_hidden > 0.0;
  if (drop) mask = ad::dropout_mask({B, config_.decoder_hidden}, 1.0 - config_.dropout_hidden, *mode.rng);
  ad::Var state = ad::Graph::constant(Tensor::matrix(B, config_.decoder_hidden));
  std::vector<int> prev(B, start_label());
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      for (std::size_t b = 0; b < B; ++b) {
        const int gold = batch.label_ids[b * T + t - 1];
        prev[b] = batch.live(b, t - 1) && gold >= 0 ? gold : start_label();
      }
    }
    DecoderStep step = decode_step(g, enc.states[t], prev, state, enc.global, drop ? &mask : nullptr);
    if (t == 0) out.global_sites.insert(out.global_sites.end(), step.global_sites.begin(), step.global_sites.end());
    state = g.where_rows(live[t], step.state, state);
    out.logits.push_back(step.logits);
  }
  out.loss = masked_loss(g, out.logits, batch);
  return out;
}

}  // namespace gcdt
