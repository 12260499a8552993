// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcdt/checkpoint.hpp"
#include "gcdt/config.hpp"
#include "gcdt/metrics.hpp"

namespace gcdt {

// Resolves "last" against the first data line of the file.
std::size_t resolve_label_column(const std::string& path, const std::string& label_column);

// Parses a CoNLL file and rewrites its labels to BIOES. A missing file is a
// DataError.
std::vector<Sentence> read_corpus(const std::string& path, std::size_t token_column,
                                  std::size_t label_column, Scheme scheme,
                                  LabelColumn policy = LabelColumn::kRequired);

struct Dataset {
  Vocabularies vocabs;
  Corpus train;
  Corpus dev;
};

// Train/dev corpora, vocabularies and aligned external rows. Sets
// model.external_dim from the external files when it is still zero.
Dataset load_dataset(RunConfig& config);

// Builds vocabularies from in-memory corpora and attaches char ids.
Dataset make_dataset(std::vector<Sentence> train, std::vector<Sentence> dev);

// The word table for one replica: the pretrained file when configured,
// otherwise nullopt (the model draws its own).
std::optional<PretrainedTable> load_word_table(const RunConfig& config, const Vocabulary& words, Rng& rng);

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult result;
  Checkpoint checkpoint;
  EvalReport dev_report;
  std::vector<std::vector<std::string>> dev_predictions;
};

// Initializes from Rng(seed), trains, and evaluates the best parameters on
// dev.
SeedRun run_seed(const RunConfig& config, const Dataset& data, std::uint64_t seed,
                 const std::function<void(const EpochRecord&)>& on_epoch = {});

// "token gold predicted" lines with a blank line after every sentence.
std::string render_predictions(const std::vector<Sentence>& corpus,
                               const std::vector<std::vector<std::string>>& predicted);

}  // namespace gcdt
