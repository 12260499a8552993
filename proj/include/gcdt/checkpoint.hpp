// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gcdt/model.hpp"
#include "gcdt/train.hpp"

namespace gcdt {

std::uint64_t fnv1a(std::string_view bytes);

struct NamedTensor {
  std::string name;
  bool trainable = true;
  Tensor value;
};

// Self-describing snapshot: config text, vocabularies, every registered
// tensor, optimizer moments, progress counters and the training rng.
struct Checkpoint {
  std::string config_text;  // resolved run config, "key = value" lines
  ModelConfig model;
  std::uint64_t model_digest = 0;  // fnv1a of render_model_config(model)
  Vocabularies vocabs;
  std::vector<NamedTensor> tensors;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_epsilon = 1e-8;
  std::uint64_t adam_steps = 0;
  std::vector<Tensor> adam_m, adam_v;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double best_dev_f1 = 0.0;
  std::string rng_state;
};

Checkpoint capture(const Model& model, const Vocabularies& vocabs, const std::string& config_text);
void attach_optimizer(Checkpoint& ckpt, const AdamState& adam);

// Binary layout: magic, version, then length-prefixed fields; integers and
// doubles little-endian; a trailing fnv1a digest of everything before it.
std::string serialize(const Checkpoint& ckpt);
// Throws DataError on truncation, bad magic or digest mismatch.
Checkpoint deserialize(std::string_view bytes);

// Write to a sibling temp file, then rename over the target.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the network and copies every tensor in by name.
Model restore_model(const Checkpoint& ckpt);
AdamState restore_optimizer(const Checkpoint& ckpt, const Model& model);

}  // namespace gcdt
