// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "gcdt/checkpoint.hpp"
#include "gcdt/config.hpp"
#include "gcdt/decode.hpp"
#include "gcdt/errors.hpp"
#include "gcdt/gradcheck.hpp"
#include "gcdt/metrics.hpp"
#include "gcdt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace gcdt;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> beam;
  std::string output_dir;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  cmd->add_option("--set", args.overrides, "override, key=value (repeatable)");
  cmd->add_option("--seed", args.seed, "single seed, replaces the seeds list");
  cmd->add_option("--beam", args.beam, "beam width");
}

RunConfig resolve(const ConfigArgs& args) {
  RunConfig config;
  if (const char* env = std::getenv("GCDT_OUTPUT_DIR")) config.output_dir = env;
  if (!args.config_path.empty()) apply_config_file(config, args.config_path);
  for (const auto& o : args.overrides) apply_override(config, o);
  if (args.seed) config.train.seeds = {*args.seed};
  if (args.beam) config.model.beam_size = *args.beam;
  if (!args.output_dir.empty()) config.output_dir = args.output_dir;
  if (config.output_dir.empty()) config.output_dir = "gcdt_out";
  finalize(config);
  config.validate();
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_train(const ConfigArgs& args) {
  RunConfig config = resolve(args);
  Dataset data = load_dataset(config);
  config.validate();
  const fs::path root(config.output_dir);
  fs::create_directories(root);
  write_file(root / "config.txt", render_config(config));

  const auto& seeds = config.train.seeds;
  std::size_t workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, seeds.size());
  std::vector<SeedRun> runs(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  std::mutex log_lock;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(log_lock);
        if (next >= seeds.size()) return;
        i = next++;
      }
      try {
        const fs::path dir = root / ("seed-" + std::to_string(seeds[i]));
        fs::create_directories(dir);
        std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
        runs[i] = run_seed(config, data, seeds[i], [&](const EpochRecord& r) {
          log << to_json_line(r) << '\n' << std::flush;
          std::lock_guard lock(log_lock);
          std::fprintf(stderr, "seed %llu epoch %zu step %zu loss %.6f lr %.6g dev_f1 %.4f dev_acc %.4f\n",
                       static_cast<unsigned long long>(seeds[i]), r.epoch, r.step, r.loss, r.lr, r.dev_f1,
                       r.dev_accuracy);
        });
        save_checkpoint((dir / "checkpoint.bin").string(), runs[i].checkpoint);
        write_file(dir / "dev_report.txt", format_report(runs[i].dev_report));
        write_file(dir / "dev_predictions.txt", render_predictions(data.dev.sentences, runs[i].dev_predictions));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::string summary;
  std::vector<double> scores;
  for (const auto& run : runs) {
    const double f1 = 100.0 * run.dev_report.overall.f1();
    scores.push_back(f1);
    char line[160];
    std::snprintf(line, sizeof line, "seed %llu: dev F1 %.2f (best epoch %zu)\n",
                  static_cast<unsigned long long>(run.seed), f1, run.result.best_epoch);
    summary += line;
  }
  if (scores.size() >= 2) {
    const auto [mean, std] = aggregate_runs(scores);
    char line[96];
    std::snprintf(line, sizeof line, "F1 %.2f ± %.2f over %zu seeds\n", mean, std, scores.size());
    summary += line;
  }
  write_file(root / "summary.txt", summary);
  std::cout << summary;
  return kOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string config_path;
  std::optional<std::size_t> beam;
};

int cmd_predict(const PredictArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  if (!args.config_path.empty()) {
    RunConfig expected;
    apply_config_file(expected, args.config_path);
    finalize(expected);
    if (fnv1a(render_model_config(expected.model)) != ckpt.model_digest) {
      throw ConfigError("config '" + args.config_path + "' does not match the checkpoint's model digest");
    }
  }
  RunConfig stored;
  {
    std::istringstream text(ckpt.config_text);
    apply_config_text(stored, text);
  }
  if (stored.model.use_external) throw ConfigError("predict: models using external embeddings are not supported here");
  const Model model = restore_model(ckpt);
  const std::size_t beam = args.beam.value_or(ckpt.model.beam_size);
  if (beam < 1) throw ConfigError("beam must be at least 1");

  std::size_t label_col = stored.token_column + 1;
  if (stored.label_column != "last") label_col = std::stoul(stored.label_column);
  else if (fs::exists(args.input) && fs::file_size(args.input) > 0) label_col = resolve_label_column(args.input, "last");
  if (label_col == stored.token_column) label_col = stored.token_column + 1;
  auto corpus = read_corpus(args.input, stored.token_column, label_col, parse_scheme(stored.input_scheme),
                            LabelColumn::kOptional);
  attach_char_ids(corpus, ckpt.vocabs.chars);
  const auto predicted = predict_labels(model, corpus, ckpt.vocabs.words, ckpt.vocabs.labels, nullptr, beam,
                                        stored.train.token_budget);
  const std::string text = render_predictions(corpus, predicted);
  if (args.output.empty() || args.output == "-") {
    std::cout << text;
  } else {
    write_file(args.output, text);
  }
  return kOk;
}

int cmd_eval(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::cout << format_report(evaluate_columns(in));
  return kOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t seeds = 20;
  double tolerance = 1e-4;
  std::vector<std::string> components;
  std::string corrupt_op;
};

int cmd_gradcheck(const ConfigArgs& config_args, GradcheckArgs args) {
  if (!config_args.config_path.empty() || !config_args.overrides.empty()) {
    const RunConfig config = resolve(config_args);
    if (!config_args.seed && config.train.seeds.size() == 1) args.seed = config.train.seeds.front();
  }
  if (config_args.seed) args.seed = *config_args.seed;
  if (!args.corrupt_op.empty()) {
    const auto op = ad::op_from_name(args.corrupt_op);
    if (!op) throw ConfigError("unknown op '" + args.corrupt_op + "'");
    ad::set_corrupted_op(op);
  }
  if (args.components.empty()) args.components = gradcheck_components();
  std::vector<std::string> failures;
  for (const auto& name : args.components) {
    const ComponentCheck r = check_component(name, args.seed, args.seeds, args.tolerance);
    std::printf("%-14s max_rel_error %.3e  seeds %zu  coords %zu  %s\n", r.component.c_str(), r.max_rel_error,
                r.seeds, r.coordinates, r.passed ? "PASS" : "FAIL");
    if (!r.passed) failures.push_back(r.component);
  }
  ad::set_corrupted_op(std::nullopt);
  if (failures.empty()) return kOk;
  std::string list;
  for (const auto& f : failures) list += (list.empty() ? "" : ", ") + f;
  std::printf("gradient check failed: %s\n", list.c_str());
  return kNumeric;
}

struct ParamsArgs {
  std::optional<std::size_t> chars;
  std::optional<std::size_t> labels;
};

int cmd_params(const ConfigArgs& config_args, const ParamsArgs& args) {
  RunConfig config = resolve(config_args);
  std::size_t chars = 0, labels = 0, words = 2;
  if (!config.train_path.empty() && !config.dev_path.empty() && !config.model.use_external) {
    const Dataset data = load_dataset(config);
    chars = data.vocabs.chars.size();
    labels = data.vocabs.labels.size();
    words = data.vocabs.words.size();
  }
  if (args.chars) chars = *args.chars;
  if (args.labels) labels = *args.labels;
  if (chars == 0) chars = 2;
  if (labels == 0) throw ConfigError("params: give --labels or a train/dev corpus");
  if (config.model.use_external && config.model.external_dim == 0) {
    throw ConfigError("params: external_dim must be set when use_external is on");
  }
  Rng rng(config.train.seeds.front());
  const Model model(config.model, words, chars, labels, rng);
  for (const auto& [component, count] : model.param_breakdown()) std::printf("%-10s %zu\n", component.c_str(), count);
  std::printf("%-10s %zu\n", "total", model.param_count());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Global-context deep-transition sequence labeler"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train one model per seed");
  add_config_flags(train_cmd, train_args);
  train_cmd->add_option("--output", train_args.output_dir, "output directory");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "tag a CoNLL file with a checkpoint");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->required();
  predict_cmd->add_option("--input", predict_args.input)->required();
  predict_cmd->add_option("--output", predict_args.output, "defaults to stdout");
  predict_cmd->add_option("--beam", predict_args.beam);
  predict_cmd->add_option("--config", predict_args.config_path, "must describe the same model");

  std::string eval_path;
  auto* eval_cmd = app.add_subcommand("eval", "chunk P/R/F1 of 'token ... gold predicted' columns");
  eval_cmd->add_option("file", eval_path)->required();

  ConfigArgs grad_config;
  GradcheckArgs grad_args;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_config_flags(grad_cmd, grad_config);
  grad_cmd->add_option("--seeds", grad_args.seeds, "seeds per component");
  grad_cmd->add_option("--tolerance", grad_args.tolerance);
  grad_cmd->add_option("--component", grad_args.components);
  grad_cmd->add_option("--corrupt-op", grad_args.corrupt_op)->group("");

  ConfigArgs params_config;
  ParamsArgs params_args;
  auto* params_cmd = app.add_subcommand("params", "trainable parameter counts");
  add_config_flags(params_cmd, params_config);
  params_cmd->add_option("--chars", params_args.chars, "character vocabulary size incl. PAD/UNK");
  params_cmd->add_option("--labels", params_args.labels, "label inventory size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*predict_cmd) return cmd_predict(predict_args);
    if (*eval_cmd) return cmd_eval(eval_path);
    if (*grad_cmd) return cmd_gradcheck(grad_config, grad_args);
    if (*params_cmd) return cmd_params(params_config, params_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
