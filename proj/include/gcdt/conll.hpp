// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcdt/tensor.hpp"

namespace gcdt {

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  // Per token, indices into the character vocabulary. Filled by attach_char_ids.
  std::vector<std::vector<int>> char_ids;

  std::size_t size() const { return tokens.size(); }
};

enum class VocabKind { kWord, kChar, kLabel };

// Bijective item <-> index map. Word and char vocabularies reserve PAD (0)
// and UNK (1); label vocabularies reserve nothing. Case-sensitive.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadItem = "<PAD>";
  static constexpr const char* kUnkItem = "<UNK>";

  explicit Vocabulary(VocabKind kind = VocabKind::kWord);
  static Vocabulary from_items(VocabKind kind, const std::vector<std::string>& items);

  int add(const std::string& item);
  std::optional<int> find(const std::string& item) const;
  // Unknown items map to UNK for word/char kinds; label kinds throw DataError.
  int encode(const std::string& item) const;
  const std::string& decode(int index) const;

  VocabKind kind() const { return kind_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<std::string>& items() const { return items_; }

 private:
  VocabKind kind_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> items_;
};

// Split a UTF-8 string into code points (each returned as its byte sequence).
std::vector<std::string> utf8_chars(const std::string& text);

enum class LabelColumn { kRequired, kOptional };

// Whitespace-separated columns, blank line between sentences, -DOCSTART-
// lines skipped. With kOptional, lines lacking the label column get "O".
std::vector<Sentence> parse_conll(std::istream& in, std::size_t token_column,
                                  std::size_t label_column,
                                  LabelColumn policy = LabelColumn::kRequired);

enum class Scheme { kBio1, kBio2, kBioes };
Scheme parse_scheme(const std::string& name);

// Split "B-PER" into ('B', "PER"); "O" into ('O', "").
struct Tag {
  char prefix = 'O';
  std::string type;
};
Tag split_tag(const std::string& label);

std::vector<std::string> bio1_to_bio2(const std::vector<std::string>& labels);
// Requires valid BIO2; throws DataError naming the offending position.
std::vector<std::string> convert_to_bioes(const std::vector<std::string>& labels);
std::vector<std::string> bioes_to_bio2(const std::vector<std::string>& labels);
// Rewrite every sentence's labels into BIOES from the given input scheme.
void normalize_to_bioes(std::vector<Sentence>& corpus, Scheme input);

Vocabulary build_word_vocab(const std::vector<const std::vector<Sentence>*>& corpora);
Vocabulary build_char_vocab(const std::vector<Sentence>& corpus);
Vocabulary build_label_vocab(const std::vector<const std::vector<Sentence>*>& corpora);
void attach_char_ids(std::vector<Sentence>& corpus, const Vocabulary& chars);

// Padded, id-encoded group of sentences. Matrices are row-major by
// sentence: word_ids[b * max_len + t].
struct Batch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::size_t max_chars = 0;
  std::vector<int> word_ids;      // B x T, PAD beyond length
  std::vector<int> char_ids;      // B x T x C, PAD beyond word length
  std::vector<int> char_lengths;  // B x T, 0 on padded positions
  std::vector<int> label_ids;     // B x T, -1 on padding or unknown labels
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> sentence_index;  // position in the source corpus
  std::size_t tokens = 0;

  bool live(std::size_t b, std::size_t t) const { return t < lengths[b]; }
};

// Partition sentence indices into groups whose total length fits the token
// budget. Sentences are bucketed by length; shuffle randomizes the order of
// equal-length sentences and of the groups.
std::vector<std::vector<std::size_t>> plan_batches(const std::vector<Sentence>& corpus,
                                                   std::size_t token_budget, Rng& rng,
                                                   bool shuffle);

Batch build_batch(const std::vector<Sentence>& corpus, const std::vector<std::size_t>& members,
                  const Vocabulary& words, const Vocabulary& labels, std::size_t min_chars = 1);

std::vector<Batch> make_batches(const std::vector<Sentence>& corpus, const Vocabulary& words,
                                const Vocabulary& labels, std::size_t token_budget, Rng& rng,
                                bool shuffle, std::size_t min_chars = 1);

}  // namespace gcdt
