// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <istream>
#include <string>
#include <vector>

#include "gcdt/model.hpp"
#include "gcdt/train.hpp"

namespace gcdt {

// Everything one CLI run needs: model, optimization, and data settings.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_path;
  std::string dev_path;
  std::string pretrained_path;
  std::string external_train_path;
  std::string external_dev_path;
  std::string external_pooling = "mean";
  std::size_t token_column = 0;
  std::string label_column = "last";  // index, or "last"
  std::string input_scheme = "bio2";
  std::string output_dir;
  std::size_t threads = 0;  // 0: one per seed, capped by the hardware
  bool global_position_set = false;

  // Cross-field checks of model and train sections plus data keys.
  void validate() const;
};

// Every key that may appear in a config file, in echo order.
const std::vector<std::string>& config_keys();

// Sets one key from its text form; unknown keys and malformed values throw
// ConfigError naming the key.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// "key = value" lines; '#' starts a comment. Applies on top of `config`.
// Relative paths are taken relative to base_dir when it is given; a config
// file passes its own directory.
void apply_config_text(RunConfig& config, std::istream& in, const std::string& base_dir = {});
void apply_config_file(RunConfig& config, const std::string& path);

// Parses "key=value".
void apply_override(RunConfig& config, const std::string& assignment);

// Turning the global encoder off without naming a position implies none.
void finalize(RunConfig& config);

// Full resolved config, one "key = value" per line in config_keys() order.
std::string render_config(const RunConfig& config);
// Only the keys that shape the network; the checkpoint digest covers this.
std::string render_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

}  // namespace gcdt
