// SPDX-License-Identifier: Apache-2.0
#include "gcdt/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "gcdt/decode.hpp"
#include "gcdt/errors.hpp"
#include "gcdt/metrics.hpp"

namespace gcdt {

void TrainConfig::validate() const {
  if (!(initial_lr > 0)) throw ConfigError("train: initial_lr must be positive");
  if (!(lr_decay_rate > 0 && lr_decay_rate <= 1)) throw ConfigError("train: lr_decay_rate must lie in (0, 1]");
  if (lr_decay_interval == 0) throw ConfigError("train: lr_decay_interval must be positive");
  if (!(clip_norm > 0)) throw ConfigError("train: clip_norm must be positive");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be positive");
  if (seeds.empty()) throw ConfigError("train: at least one seed is required");
  if (token_budget == 0) throw ConfigError("train: token_budget must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0)) throw ConfigError("train: adam_epsilon must be positive");
}

double lr_at_step(std::size_t step, const TrainConfig& c) {
  const double exponent = static_cast<double>(step) / static_cast<double>(c.lr_decay_interval);
  return c.initial_lr * std::pow(c.lr_decay_rate, exponent);
}

double global_norm(std::span<const Tensor> grads) {
  double total = 0.0;
  for (const auto& g : grads)
    for (double x : g.data()) total += x * x;
  return std::sqrt(total);
}

double clip_gradients(std::span<Tensor> grads, double clip_norm) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericError("clip_gradients: gradient norm is not finite");
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& g : grads)
      for (auto& x : g.data()) x *= scale;
  }
  return norm;
}

double clip_gradients(ParamStore& params, double clip_norm) {
  std::vector<Tensor> grads;
  std::vector<ad::Var> owners;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    ad::Var v = e.var;
    if (!v.has_grad()) continue;
    grads.push_back(std::move(v.grad_storage()));
    owners.push_back(v);
  }
  const double norm = clip_gradients(std::span<Tensor>(grads), clip_norm);
  for (std::size_t i = 0; i < owners.size(); ++i) owners[i].grad_storage() = std::move(grads[i]);
  return norm;
}

AdamState::AdamState(const ParamStore& params, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    m_.emplace_back(e.var.shape(), 0.0);
    v_.emplace_back(e.var.shape(), 0.0);
  }
}

void AdamState::restore(std::size_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw DataError("adam: restored state covers a different parameter set");
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].shape() != m_[i].shape() || v[i].shape() != v_[i].shape()) {
      throw DataError("adam: restored moment " + std::to_string(i) + " has the wrong shape");
    }
  }
  step_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamState::step(ParamStore& params, double lr) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double correct1 = 1.0 - std::pow(beta1_, t);
  const double correct2 = 1.0 - std::pow(beta2_, t);
  std::size_t i = 0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    if (i >= m_.size() || m_[i].shape() != e.var.shape()) {
      throw ShapeError("adam: moment shapes no longer match parameter '" + e.name + "'");
    }
    ad::Var v = e.var;
    Tensor& value = v.mutable_value();
    const Tensor& grad = v.grad_storage();
    Tensor& m = m_[i];
    Tensor& s = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      s[k] = beta2_ * s[k] + (1.0 - beta2_) * g * g;
      const double m_hat = m[k] / correct1;
      const double v_hat = s[k] / correct2;
      value[k] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
    ++i;
  }
  if (i != m_.size()) throw ShapeError("adam: parameter set changed since the optimizer was built");
}

void adam_step(ParamStore& params, AdamState& state, double lr) { state.step(params, lr); }

std::string to_json_line(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"epoch\": %zu, \"step\": %zu, \"loss\": %.17g, \"lr\": %.17g, \"dev_f1\": %.17g, "
                "\"dev_accuracy\": %.17g}",
                r.epoch, r.step, r.loss, r.lr, r.dev_f1, r.dev_accuracy);
  return buf;
}

EvalReport corpus_report(const Model& model, const Corpus& corpus, const Vocabularies& vocabs,
                         std::size_t beam, std::size_t token_budget) {
  std::vector<std::vector<std::string>> gold;
  for (const auto& s : corpus.sentences) gold.push_back(s.labels);
  const auto pred = predict_labels(model, corpus.sentences, vocabs.words, vocabs.labels,
                                   corpus.external_rows(), beam, token_budget);
  return evaluate(gold, pred);
}

double corpus_f1(const Model& model, const Corpus& corpus, const Vocabularies& vocabs,
                 std::size_t beam, std::size_t token_budget) {
  return corpus_report(model, corpus, vocabs, beam, token_budget).overall.f1();
}

namespace {

std::vector<Tensor> snapshot(const ParamStore& params) {
  std::vector<Tensor> out;
  for (const auto& e : params.entries()) out.push_back(e.var.value());
  return out;
}

void restore_snapshot(ParamStore& params, const std::vector<Tensor>& values) {
  std::size_t i = 0;
  for (const auto& e : params.entries()) {
    ad::Var v = e.var;
    v.mutable_value() = values[i++];
  }
}

}  // namespace

TrainResult train(Model& model, const Corpus& train_set, const Corpus& dev_set,
                  const Vocabularies& vocabs, const TrainConfig& config, std::uint64_t seed,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.sentences.empty()) throw DataError("train: training corpus is empty");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  ParamStore& params = model.params();
  AdamState adam(params, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  const std::size_t min_chars = model.config().use_char ? model.config().char_filter_width : 1;
  const std::size_t beam = model.config().beam_size;

  TrainResult result;
  std::size_t step = 0;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = make_batches(train_set.sentences, vocabs.words, vocabs.labels,
                                      config.token_budget, rng, true, min_chars);
    double loss_sum = 0.0;
    double lr = lr_at_step(step, config);
    for (const auto& batch : batches) {
      params.zero_grad();
      ad::Graph g;
      const LossOutput out = model.loss(g, batch, train_set.external_rows(), RunMode{true, &rng});
      const double value = out.loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));
      }
      g.backward(out.loss);
      clip_gradients(params, config.clip_norm);
      lr = lr_at_step(step, config);
      adam.step(params, lr);
      ++step;
      loss_sum += value;
    }
    params.zero_grad();

    EpochRecord record;
    record.epoch = epoch;
    record.step = step;
    record.loss = loss_sum / static_cast<double>(batches.size());
    record.lr = lr;
    const EvalReport dev = corpus_report(model, dev_set, vocabs, beam, config.token_budget);
    record.dev_f1 = dev.overall.f1();
    record.dev_accuracy = dev.accuracy();
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    const bool better = record.dev_f1 > result.best_dev_f1 ||
                        (record.dev_f1 == result.best_dev_f1 && record.dev_accuracy > result.best_dev_accuracy);
    if (better) {
      result.best_dev_f1 = record.dev_f1;
      result.best_dev_accuracy = record.dev_accuracy;
      result.best_epoch = epoch;
      result.best_step = step;
      result.best_params = snapshot(params);
      result.best_optimizer = adam;
      result.best_rng_state = rng.state();
      stale = 0;
    } else {
      ++stale;
    }
    if ((record.dev_f1 >= 1.0 && record.dev_accuracy >= 1.0) || stale > config.patience) {
      result.early_stopped = epoch < config.max_epochs;
      break;
    }
  }
  restore_snapshot(params, result.best_params);
  return result;
}

std::pair<double, double> aggregate_runs(std::span<const double> scores) {
  if (scores.size() < 2) throw std::invalid_argument("aggregate_runs: need at least two scores");
  const double n = static_cast<double>(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace gcdt
