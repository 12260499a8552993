// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcdt/autodiff.hpp"
#include "gcdt/cells.hpp"
#include "gcdt/conll.hpp"
#include "gcdt/embeddings.hpp"
#include "gcdt/params.hpp"

namespace gcdt {

// Where the pooled sentence embedding g is concatenated.
enum class GlobalPosition { kEncoderInput, kDecoderInput, kSoftmaxInput, kNone };
GlobalPosition parse_global_position(const std::string& name);
const char* global_position_name(GlobalPosition pos);
ad::Pool parse_pooling(const std::string& name);
const char* pooling_name(ad::Pool pool);

struct ModelConfig {
  bool use_char = true;
  bool use_pretrained = true;
  bool use_global = true;
  bool use_external = false;
  CellKind cell_kind = CellKind::kDt;
  std::size_t transition_count = 4;
  std::size_t encoder_hidden = 256;
  std::size_t global_hidden = 128;
  std::size_t decoder_hidden = 256;
  std::size_t label_embed_dim = 32;
  GlobalPosition global_position = GlobalPosition::kEncoderInput;
  ad::Pool global_pooling = ad::Pool::kMean;
  std::size_t beam_size = 5;
  double dropout_embed = 0.5;
  double dropout_hidden = 0.3;
  bool inner_dropout = false;
  std::size_t char_embed_dim = 30;
  std::size_t char_filter_width = 3;
  std::size_t char_filters = 128;
  std::size_t word_dim = 300;
  std::size_t external_dim = 0;  // taken from the external embedding file

  // Throws ConfigError on inconsistent switches or dimensions.
  void validate() const;
  // Width of the sequence-labeling encoder input.
  std::size_t token_dim() const;
  // Width of the global encoder input ([char; word], or external alone).
  std::size_t global_input_dim() const;
};

struct RunMode {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

// Per-corpus-sentence external vectors (tokens x external_dim), indexed by
// Batch::sentence_index.
using ExternalRows = std::vector<Tensor>;

struct Encoded {
  std::vector<ad::Var> states;  // per step, B x 2*encoder_hidden
  ad::Var global;               // B x 2*global_hidden, empty without use_global
  std::vector<GlobalPosition> global_sites;
};

struct DecoderStep {
  ad::Var logits;  // K x labels
  ad::Var state;   // K x decoder_hidden
  std::vector<GlobalPosition> global_sites;
};

struct LossOutput {
  ad::Var loss;
  std::vector<ad::Var> logits;  // per step, B x labels
  std::vector<GlobalPosition> global_sites;
  std::size_t tokens = 0;
};

class Model {
 public:
  // Registers and initializes every parameter. When use_pretrained is set
  // and no table is given, a random frozen table is drawn.
  Model(ModelConfig config, std::size_t word_vocab, std::size_t char_vocab, std::size_t labels,
        Rng& rng, std::optional<PretrainedTable> pretrained = std::nullopt);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  std::size_t label_count() const { return labels_; }
  int start_label() const { return static_cast<int>(labels_); }

  // Trainable element count; the frozen word table is excluded.
  std::size_t param_count() const { return store_.trainable_count(); }
  // Trainable counts grouped by component, in registration order.
  std::vector<std::pair<std::string, std::size_t>> param_breakdown() const;

  // Per-step local word representations for one batch.
  struct Local {
    std::vector<ad::Var> lexical;   // [char; word] (enabled parts), B x width
    std::vector<ad::Var> external;  // B x external_dim, empty unless use_external
  };
  Local local_features(ad::Graph& g, const Batch& batch, const ExternalRows* external) const;

  ad::Var global_context_encode(ad::Graph& g, std::span<const ad::Var> inputs,
                                std::span<const ad::RowMask> live, const RunMode& mode) const;

  Encoded encode(ad::Graph& g, const Batch& batch, const ExternalRows* external,
                 const RunMode& mode) const;

  // One decoder step for K rows: encoder states h (K x 2*encoder_hidden),
  // previous label ids (start_label() at the first step), decoder state.
  // global is required when g enters the decoder or the softmax.
  DecoderStep decode_step(ad::Graph& g, const ad::Var& h, std::span<const int> prev_labels,
                          const ad::Var& state, const ad::Var& global,
                          const Tensor* dropout_mask = nullptr) const;

  // Teacher-forced logits plus mean cross-entropy over live tokens.
  LossOutput loss(ad::Graph& g, const Batch& batch, const ExternalRows* external,
                  const RunMode& mode) const;

  // Mean cross-entropy of per-step logits against the batch's gold labels;
  // padded positions carry zero weight.
  static ad::Var masked_loss(ad::Graph& g, std::span<const ad::Var> logits, const Batch& batch);

  static std::vector<ad::RowMask> live_masks(const Batch& batch);

 private:
  ModelConfig config_;
  std::size_t labels_;
  ParamStore store_;
  std::optional<CharCNN> char_cnn_;
  std::optional<PretrainedTable> words_;
  std::optional<RecurrentParams> global_fwd_, global_bwd_;
  RecurrentParams encoder_fwd_, encoder_bwd_;
  RecurrentParams decoder_;
  ad::Var label_table_;
  ad::Var out_w_, out_b_;
};

}  // namespace gcdt
