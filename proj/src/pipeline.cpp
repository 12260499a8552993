// SPDX-License-Identifier: Apache-2.0
#include "gcdt/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "gcdt/decode.hpp"
#include "gcdt/errors.hpp"

namespace gcdt {

namespace {

std::ifstream open_input(const std::string& path, const char* what) {
  if (path.empty()) throw DataError(std::string(what) + " path is not set");
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

ExternalRows read_external_rows(const std::string& path, SubtokenPool mode, const Corpus& corpus,
                                std::size_t& dim) {
  auto in = open_input(path, "external embedding file");
  const ExternalEmbeddingSet set = read_external(in, mode);
  if (set.sentences.size() != corpus.sentences.size()) {
    throw DataError("external: '" + path + "' has " + std::to_string(set.sentences.size()) +
                    " sentences, corpus has " + std::to_string(corpus.sentences.size()));
  }
  if (dim == 0) dim = set.dim;
  if (set.dim != dim) {
    throw ConfigError("external_dim is " + std::to_string(dim) + " but '" + path + "' stores " +
                      std::to_string(set.dim));
  }
  ExternalRows rows = align_external(set);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].rows() != corpus.sentences[i].size()) {
      throw DataError("external: sentence " + std::to_string(i) + " aligns " + std::to_string(rows[i].rows()) +
                      " tokens, corpus has " + std::to_string(corpus.sentences[i].size()));
    }
  }
  return rows;
}

}  // namespace

std::size_t resolve_label_column(const std::string& path, const std::string& label_column) {
  if (label_column != "last") return std::stoul(label_column);
  auto in = open_input(path, "corpus");
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string c; fields >> c;) cols.push_back(c);
    if (cols.empty() || cols[0] == "-DOCSTART-") continue;
    return cols.size() - 1;
  }
  return 1;
}

std::vector<Sentence> read_corpus(const std::string& path, std::size_t token_column,
                                  std::size_t label_column, Scheme scheme, LabelColumn policy) {
  auto in = open_input(path, "corpus");
  auto corpus = parse_conll(in, token_column, label_column, policy);
  normalize_to_bioes(corpus, scheme);
  return corpus;
}

Dataset make_dataset(std::vector<Sentence> train, std::vector<Sentence> dev) {
  Dataset data;
  data.vocabs.words = build_word_vocab({&train, &dev});
  data.vocabs.chars = build_char_vocab(train);
  data.vocabs.labels = build_label_vocab({&train, &dev});
  attach_char_ids(train, data.vocabs.chars);
  attach_char_ids(dev, data.vocabs.chars);
  data.train.sentences = std::move(train);
  data.dev.sentences = std::move(dev);
  return data;
}

Dataset load_dataset(RunConfig& config) {
  const Scheme scheme = parse_scheme(config.input_scheme);
  const std::size_t label_col = resolve_label_column(config.train_path, config.label_column);
  auto train = read_corpus(config.train_path, config.token_column, label_col, scheme);
  auto dev = read_corpus(config.dev_path, config.token_column, label_col, scheme);
  if (train.empty()) throw DataError("training corpus '" + config.train_path + "' has no sentences");
  if (dev.empty()) throw DataError("dev corpus '" + config.dev_path + "' has no sentences");
  Dataset data = make_dataset(std::move(train), std::move(dev));
  if (config.model.use_external) {
    const SubtokenPool mode = parse_subtoken_pool(config.external_pooling);
    data.train.external = read_external_rows(config.external_train_path, mode, data.train, config.model.external_dim);
    data.dev.external = read_external_rows(config.external_dev_path, mode, data.dev, config.model.external_dim);
  }
  return data;
}

std::optional<PretrainedTable> load_word_table(const RunConfig& config, const Vocabulary& words, Rng& rng) {
  if (!config.model.use_pretrained || config.pretrained_path.empty()) return std::nullopt;
  auto in = open_input(config.pretrained_path, "pretrained embedding file");
  return load_pretrained(in, config.model.word_dim, words, rng);
}

SeedRun run_seed(const RunConfig& config, const Dataset& data, std::uint64_t seed,
                 const std::function<void(const EpochRecord&)>& on_epoch) {
  SeedRun run;
  run.seed = seed;
  Rng init(seed);
  auto table = load_word_table(config, data.vocabs.words, init);
  Model model(config.model, data.vocabs.words.size(), data.vocabs.chars.size(), data.vocabs.labels.size(), init,
              std::move(table));
  run.result = train(model, data.train, data.dev, data.vocabs, config.train, seed, on_epoch);

  RunConfig echoed = config;
  echoed.train.seeds = {seed};
  run.checkpoint = capture(model, data.vocabs, render_config(echoed));
  attach_optimizer(run.checkpoint, run.result.best_optimizer);
  run.checkpoint.step = run.result.best_step;
  run.checkpoint.epoch = run.result.best_epoch;
  run.checkpoint.best_dev_f1 = run.result.best_dev_f1;
  run.checkpoint.rng_state = run.result.best_rng_state;

  run.dev_predictions = predict_labels(model, data.dev.sentences, data.vocabs.words, data.vocabs.labels,
                                       data.dev.external_rows(), config.model.beam_size, config.train.token_budget);
  std::vector<std::vector<std::string>> gold;
  for (const auto& s : data.dev.sentences) gold.push_back(s.labels);
  run.dev_report = evaluate(gold, run.dev_predictions);
  return run;
}

std::string render_predictions(const std::vector<Sentence>& corpus,
                               const std::vector<std::vector<std::string>>& predicted) {
  if (predicted.size() != corpus.size()) throw std::invalid_argument("render_predictions: size mismatch");
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    if (predicted[i].size() != s.size()) {
      throw std::invalid_argument("render_predictions: sentence " + std::to_string(i) + " length mismatch");
    }
    for (std::size_t t = 0; t < s.size(); ++t) out += s.tokens[t] + ' ' + s.labels[t] + ' ' + predicted[i][t] + '\n';
    out += '\n';
  }
  return out;
}

}  // namespace gcdt
