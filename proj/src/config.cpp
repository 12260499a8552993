// SPDX-License-Identifier: Apache-2.0
#include "gcdt/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "gcdt/errors.hpp"

namespace gcdt {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + expected);
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::uint64_t> to_seeds(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[') v.erase(0, 1);
  if (!v.empty() && v.back() == ']') v.pop_back();
  std::vector<std::uint64_t> out;
  std::stringstream in(v);
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    std::uint64_t seed = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), seed);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      bad_value(key, v, "a comma-separated list of seeds");
    }
    out.push_back(seed);
  }
  if (out.empty()) bad_value(key, v, "a non-empty seed list");
  return out;
}

std::string real_text(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string flag_text(bool v) { return v ? "true" : "false"; }

struct KeySpec {
  std::string name;
  bool model;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GCDT_COUNT(field)                                                                \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_count(k, v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }
#define GCDT_REAL(field)                                                                \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_real(k, v); }, \
      [](const RunConfig& c) { return real_text(c.field); }
#define GCDT_FLAG(field)                                                                \
  [](RunConfig& c, const std::string& k, const std::string& v) { c.field = to_flag(k, v); }, \
      [](const RunConfig& c) { return flag_text(c.field); }
#define GCDT_TEXT(field)                                                                     \
  [](RunConfig& c, const std::string&, const std::string& v) { c.field = v; }, \
      [](const RunConfig& c) { return c.field; }

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"use_char", true, GCDT_FLAG(model.use_char)},
      {"use_pretrained", true, GCDT_FLAG(model.use_pretrained)},
      {"use_global", true, GCDT_FLAG(model.use_global)},
      {"use_external", true, GCDT_FLAG(model.use_external)},
      {"cell_kind", true,
       [](RunConfig& c, const std::string&, const std::string& v) { c.model.cell_kind = parse_cell_kind(v); },
       [](const RunConfig& c) { return std::string(cell_kind_name(c.model.cell_kind)); }},
      {"transition_count", true, GCDT_COUNT(model.transition_count)},
      {"encoder_hidden", true, GCDT_COUNT(model.encoder_hidden)},
      {"global_hidden", true, GCDT_COUNT(model.global_hidden)},
      {"decoder_hidden", true, GCDT_COUNT(model.decoder_hidden)},
      {"label_embed_dim", true, GCDT_COUNT(model.label_embed_dim)},
      {"global_position", true,
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.model.global_position = parse_global_position(v);
         c.global_position_set = true;
       },
       [](const RunConfig& c) { return std::string(global_position_name(c.model.global_position)); }},
      {"global_pooling", true,
       [](RunConfig& c, const std::string&, const std::string& v) { c.model.global_pooling = parse_pooling(v); },
       [](const RunConfig& c) { return std::string(pooling_name(c.model.global_pooling)); }},
      {"beam_size", true, GCDT_COUNT(model.beam_size)},
      {"dropout_embed", true, GCDT_REAL(model.dropout_embed)},
      {"dropout_hidden", true, GCDT_REAL(model.dropout_hidden)},
      {"inner_dropout", true, GCDT_FLAG(model.inner_dropout)},
      {"char_embed_dim", true, GCDT_COUNT(model.char_embed_dim)},
      {"char_filter_width", true, GCDT_COUNT(model.char_filter_width)},
      {"char_filters", true, GCDT_COUNT(model.char_filters)},
      {"word_dim", true, GCDT_COUNT(model.word_dim)},
      {"external_dim", true, GCDT_COUNT(model.external_dim)},
      {"initial_lr", false, GCDT_REAL(train.initial_lr)},
      {"lr_decay_rate", false, GCDT_REAL(train.lr_decay_rate)},
      {"lr_decay_interval", false, GCDT_COUNT(train.lr_decay_interval)},
      {"clip_norm", false, GCDT_REAL(train.clip_norm)},
      {"max_epochs", false, GCDT_COUNT(train.max_epochs)},
      {"patience", false, GCDT_COUNT(train.patience)},
      {"seeds", false,
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seeds = to_seeds(k, v); },
       [](const RunConfig& c) {
         std::string out;
         for (auto s : c.train.seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
         return out;
       }},
      {"token_budget", false, GCDT_COUNT(train.token_budget)},
      {"adam_beta1", false, GCDT_REAL(train.adam_beta1)},
      {"adam_beta2", false, GCDT_REAL(train.adam_beta2)},
      {"adam_epsilon", false, GCDT_REAL(train.adam_epsilon)},
      {"train_path", false, GCDT_TEXT(train_path)},
      {"dev_path", false, GCDT_TEXT(dev_path)},
      {"pretrained_path", false, GCDT_TEXT(pretrained_path)},
      {"external_train_path", false, GCDT_TEXT(external_train_path)},
      {"external_dev_path", false, GCDT_TEXT(external_dev_path)},
      {"external_pooling", false, GCDT_TEXT(external_pooling)},
      {"token_column", false, GCDT_COUNT(token_column)},
      {"label_column", false, GCDT_TEXT(label_column)},
      {"input_scheme", false, GCDT_TEXT(input_scheme)},
      {"output_dir", false, GCDT_TEXT(output_dir)},
      {"threads", false, GCDT_COUNT(threads)},
  };
  return table;
}

#undef GCDT_COUNT
#undef GCDT_REAL
#undef GCDT_FLAG
#undef GCDT_TEXT

const KeySpec& lookup(const std::string& key) {
  for (const auto& spec : key_table())
    if (spec.name == key) return spec;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  parse_subtoken_pool(external_pooling);
  parse_scheme(input_scheme);
  if (label_column != "last") {
    std::size_t col = 0;
    const auto [p, ec] = std::from_chars(label_column.data(), label_column.data() + label_column.size(), col);
    if (ec != std::errc() || p != label_column.data() + label_column.size()) {
      bad_value("label_column", label_column, "a column index or 'last'");
    }
    if (col == token_column) throw ConfigError("config: label_column equals token_column");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& spec : key_table()) out.push_back(spec.name);
    return out;
  }();
  return keys;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const KeySpec& spec = lookup(key);
  try {
    spec.set(config, key, value);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.find("'" + key + "'") != std::string::npos) throw;
    throw ConfigError("config key '" + key + "': " + what);
  }
}

void apply_config_text(RunConfig& config, std::istream& in, const std::string& base_dir) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const bool is_path = key.ends_with("_path") || key == "output_dir";
    if (is_path && !base_dir.empty() && !value.empty() && std::filesystem::path(value).is_relative()) {
      value = (std::filesystem::path(base_dir) / value).lexically_normal().string();
    }
    apply_setting(config, key, value);
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(config, in, std::filesystem::path(path).parent_path().string());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void finalize(RunConfig& config) {
  if (!config.model.use_global && !config.global_position_set) {
    config.model.global_position = GlobalPosition::kNone;
  }
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const auto& spec : key_table()) out += spec.name + " = " + spec.get(config) + "\n";
  return out;
}

std::string render_model_config(const ModelConfig& model) {
  RunConfig holder;
  holder.model = model;
  std::string out;
  for (const auto& spec : key_table())
    if (spec.model) out += spec.name + " = " + spec.get(holder) + "\n";
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  RunConfig holder;
  std::istringstream in(text);
  apply_config_text(holder, in);
  return holder.model;
}

}  // namespace gcdt
