// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcdt/conll.hpp"
#include "gcdt/metrics.hpp"
#include "gcdt/model.hpp"
#include "gcdt/params.hpp"

namespace gcdt {

struct TrainConfig {
  double initial_lr = 0.008;
  double lr_decay_rate = 0.95;
  std::size_t lr_decay_interval = 1000;
  double clip_norm = 5.0;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::vector<std::uint64_t> seeds{1};
  std::size_t token_budget = 4096;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

// initial_lr * decay_rate^(step / decay_interval), continuous exponent.
double lr_at_step(std::size_t step, const TrainConfig& config);

// L2 norm over every gradient tensor.
double global_norm(std::span<const Tensor> grads);

// Rescales all gradients by clip_norm / norm when the global norm exceeds
// clip_norm. Returns the pre-clip norm; throws NumericError if it is not
// finite.
double clip_gradients(std::span<Tensor> grads, double clip_norm);
double clip_gradients(ParamStore& params, double clip_norm);

// Bias-corrected Adam moments for every trainable parameter.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  // One update at learning rate lr. Frozen entries are never touched.
  void step(ParamStore& params, double lr);

  std::size_t steps() const { return step_; }
  const std::vector<Tensor>& first_moment() const { return m_; }
  const std::vector<Tensor>& second_moment() const { return v_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double epsilon() const { return epsilon_; }

  // Checkpoint restore.
  void restore(std::size_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  double beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-8;
  std::size_t step_ = 0;
  std::vector<Tensor> m_, v_;  // one per trainable entry, registry order
};

void adam_step(ParamStore& params, AdamState& state, double lr);

struct Vocabularies {
  Vocabulary words{VocabKind::kWord};
  Vocabulary chars{VocabKind::kChar};
  Vocabulary labels{VocabKind::kLabel};
};

// Sentences plus their aligned external embeddings (empty when unused).
struct Corpus {
  std::vector<Sentence> sentences;
  ExternalRows external;

  const ExternalRows* external_rows() const { return external.empty() ? nullptr : &external; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double dev_f1 = 0.0;
  double dev_accuracy = 0.0;  // token-level tag accuracy

  bool operator==(const EpochRecord&) const = default;
};

std::string to_json_line(const EpochRecord& record);

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_dev_f1 = -1.0;
  double best_dev_accuracy = -1.0;
  std::size_t best_epoch = 0;
  std::size_t best_step = 0;
  // Parameter values at the best dev epoch, registry order.
  std::vector<Tensor> best_params;
  AdamState best_optimizer;
  std::string best_rng_state;
  bool early_stopped = false;
};

// Per-epoch loop: shuffled token-budget batches, teacher-forced loss,
// clipping, Adam at lr_at_step; dev F1 after each epoch. An epoch improves
// on the best when its dev F1 is higher, or equal with higher dev token
// accuracy (invalid tag sequences can score chunk F1 = 1). Stops at
// max_epochs, after more than `patience` epochs without improvement, or
// once dev F1 and dev accuracy both reach 1. The model is left holding the
// best dev parameters. Throws NumericError naming the step on a non-finite
// loss.
TrainResult train(Model& model, const Corpus& train_set, const Corpus& dev_set,
                  const Vocabularies& vocabs, const TrainConfig& config, std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Chunk-level report of a model's predictions on a corpus.
EvalReport corpus_report(const Model& model, const Corpus& corpus, const Vocabularies& vocabs,
                         std::size_t beam, std::size_t token_budget);

// Dev F1 (chunk level, 0..1) of a model on a corpus.
double corpus_f1(const Model& model, const Corpus& corpus, const Vocabularies& vocabs,
                 std::size_t beam, std::size_t token_budget);

// Mean and sample (n - 1) standard deviation; needs at least two scores.
std::pair<double, double> aggregate_runs(std::span<const double> scores);

}  // namespace gcdt
