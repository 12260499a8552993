// SPDX-License-Identifier: Apache-2.0
#include "gcdt/conll.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "gcdt/errors.hpp"

namespace gcdt {

Vocabulary::Vocabulary(VocabKind kind) : kind_(kind) {
  if (kind_ != VocabKind::kLabel) {
    add(kPadItem);
    add(kUnkItem);
  }
}

Vocabulary Vocabulary::from_items(VocabKind kind, const std::vector<std::string>& items) {
  Vocabulary v(VocabKind::kLabel);
  v.kind_ = kind;
  for (const auto& item : items) {
    if (v.find(item)) throw DataError("vocabulary: duplicate item '" + item + "'");
    v.add(item);
  }
  if (kind != VocabKind::kLabel &&
      (v.size() < 2 || v.items_[kPad] != kPadItem || v.items_[kUnk] != kUnkItem)) {
    throw DataError("vocabulary: word/char vocabulary must start with PAD and UNK");
  }
  return v;
}

int Vocabulary::add(const std::string& item) {
  auto [it, inserted] = index_.emplace(item, static_cast<int>(items_.size()));
  if (inserted) items_.push_back(item);
  return it->second;
}

std::optional<int> Vocabulary::find(const std::string& item) const {
  auto it = index_.find(item);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::encode(const std::string& item) const {
  if (auto id = find(item)) return *id;
  if (kind_ == VocabKind::kLabel) throw DataError("vocabulary: unknown label '" + item + "'");
  return kUnk;
}

const std::string& Vocabulary::decode(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= items_.size()) {
    throw DataError("vocabulary: index " + std::to_string(index) + " out of range");
  }
  return items_[index];
}

std::vector<std::string> utf8_chars(const std::string& text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, text.size() - i);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<Sentence> parse_conll(std::istream& in, std::size_t token_column,
                                  std::size_t label_column, LabelColumn policy) {
  std::vector<Sentence> corpus;
  Sentence current;
  auto flush = [&] {
    if (!current.tokens.empty()) corpus.push_back(std::move(current));
    current = Sentence{};
  };
  std::string line;
  std::size_t line_no = 0;
  const std::size_t needed = std::max(token_column, label_column) + 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols[0].rfind("-DOCSTART-", 0) == 0) continue;
    if (cols.size() < needed) {
      const bool label_missing = cols.size() > token_column && cols.size() <= label_column;
      if (!(policy == LabelColumn::kOptional && label_missing)) {
        throw DataError("conll: line " + std::to_string(line_no) + " has " +
                        std::to_string(cols.size()) + " columns, need " + std::to_string(needed));
      }
      current.tokens.push_back(cols[token_column]);
      current.labels.push_back("O");
      continue;
    }
    current.tokens.push_back(cols[token_column]);
    current.labels.push_back(cols[label_column]);
  }
  flush();
  return corpus;
}

Scheme parse_scheme(const std::string& name) {
  if (name == "bio1" || name == "iob1") return Scheme::kBio1;
  if (name == "bio2" || name == "iob2" || name == "bio") return Scheme::kBio2;
  if (name == "bioes" || name == "iobes") return Scheme::kBioes;
  throw ConfigError("unknown tagging scheme '" + name + "'");
}

Tag split_tag(const std::string& label) {
  if (label == "O") return {};
  const auto dash = label.find('-');
  if (dash != 1) throw DataError("malformed label '" + label + "'");
  const char p = label[0];
  if (p != 'B' && p != 'I' && p != 'E' && p != 'S') throw DataError("malformed label '" + label + "'");
  return {p, label.substr(2)};
}

std::vector<std::string> bio1_to_bio2(const std::vector<std::string>& labels) {
  std::vector<std::string> out(labels.size());
  Tag prev;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Tag tag = split_tag(labels[i]);
    out[i] = labels[i];
    if (tag.prefix == 'I' && (prev.prefix == 'O' || prev.type != tag.type)) {
      out[i] = "B-" + tag.type;
    }
    prev = tag;
  }
  return out;
}

std::vector<std::string> convert_to_bioes(const std::vector<std::string>& labels) {
  std::vector<Tag> tags;
  tags.reserve(labels.size());
  for (const auto& l : labels) tags.push_back(split_tag(l));
  std::vector<std::string> out(labels.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const Tag& tag = tags[i];
    if (tag.prefix != 'O' && tag.prefix != 'B' && tag.prefix != 'I') {
      throw DataError("bioes: '" + labels[i] + "' at position " + std::to_string(i) +
                      " is not a BIO2 label");
    }
    if (tag.prefix == 'I') {
      const bool continues = i > 0 && (tags[i - 1].prefix == 'B' || tags[i - 1].prefix == 'I') &&
                             tags[i - 1].type == tag.type;
      if (!continues) {
        throw DataError("bioes: invalid BIO2 transition at position " + std::to_string(i) + " ('" +
                        labels[i] + "')");
      }
    }
    const bool next_inside =
        i + 1 < tags.size() && tags[i + 1].prefix == 'I' && tags[i + 1].type == tag.type;
    switch (tag.prefix) {
      case 'O': out[i] = "O"; break;
      case 'B': out[i] = (next_inside ? "B-" : "S-") + tag.type; break;
      default: out[i] = (next_inside ? "I-" : "E-") + tag.type; break;
    }
  }
  return out;
}

std::vector<std::string> bioes_to_bio2(const std::vector<std::string>& labels) {
  std::vector<std::string> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Tag tag = split_tag(labels[i]);
    switch (tag.prefix) {
      case 'O': out[i] = "O"; break;
      case 'B':
      case 'S': out[i] = "B-" + tag.type; break;
      default: out[i] = "I-" + tag.type; break;
    }
  }
  return out;
}

void normalize_to_bioes(std::vector<Sentence>& corpus, Scheme input) {
  for (auto& s : corpus) {
    switch (input) {
      case Scheme::kBio1: s.labels = convert_to_bioes(bio1_to_bio2(s.labels)); break;
      case Scheme::kBio2: s.labels = convert_to_bioes(s.labels); break;
      case Scheme::kBioes:
        for (const auto& l : s.labels) split_tag(l);
        break;
    }
  }
}

Vocabulary build_word_vocab(const std::vector<const std::vector<Sentence>*>& corpora) {
  Vocabulary v(VocabKind::kWord);
  for (const auto* corpus : corpora)
    for (const auto& s : *corpus)
      for (const auto& t : s.tokens) v.add(t);
  return v;
}

Vocabulary build_char_vocab(const std::vector<Sentence>& corpus) {
  Vocabulary v(VocabKind::kChar);
  for (const auto& s : corpus)
    for (const auto& t : s.tokens)
      for (const auto& c : utf8_chars(t)) v.add(c);
  return v;
}

Vocabulary build_label_vocab(const std::vector<const std::vector<Sentence>*>& corpora) {
  std::vector<std::string> labels;
  for (const auto* corpus : corpora)
    for (const auto& s : *corpus) labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return Vocabulary::from_items(VocabKind::kLabel, labels);
}

void attach_char_ids(std::vector<Sentence>& corpus, const Vocabulary& chars) {
  for (auto& s : corpus) {
    s.char_ids.clear();
    for (const auto& t : s.tokens) {
      std::vector<int> ids;
      for (const auto& c : utf8_chars(t)) ids.push_back(chars.encode(c));
      if (ids.empty()) ids.push_back(Vocabulary::kUnk);
      s.char_ids.push_back(std::move(ids));
    }
  }
}

std::vector<std::vector<std::size_t>> plan_batches(const std::vector<Sentence>& corpus,
                                                   std::size_t token_budget, Rng& rng,
                                                   bool shuffle) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  for (auto i : order) {
    if (corpus[i].size() > token_budget) {
      throw DataError("batching: sentence " + std::to_string(i) + " has " +
                      std::to_string(corpus[i].size()) + " tokens, budget is " +
                      std::to_string(token_budget));
    }
  }
  if (shuffle) rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return corpus[a].size() < corpus[b].size(); });
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> current;
  std::size_t used = 0;
  for (auto i : order) {
    const std::size_t n = corpus[i].size();
    if (used + n > token_budget && !current.empty()) {
      groups.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(i);
    used += n;
  }
  if (!current.empty()) groups.push_back(std::move(current));
  if (shuffle) rng.shuffle(groups);
  return groups;
}

Batch build_batch(const std::vector<Sentence>& corpus, const std::vector<std::size_t>& members,
                  const Vocabulary& words, const Vocabulary& labels, std::size_t min_chars) {
  Batch b;
  b.batch_size = members.size();
  b.sentence_index = members;
  b.max_chars = std::max<std::size_t>(min_chars, 1);
  for (auto i : members) {
    const Sentence& s = corpus[i];
    if (s.char_ids.size() != s.size()) throw DataError("batching: sentence lacks character ids");
    b.lengths.push_back(s.size());
    b.tokens += s.size();
    b.max_len = std::max(b.max_len, s.size());
    for (const auto& c : s.char_ids) b.max_chars = std::max(b.max_chars, c.size());
  }
  const std::size_t B = b.batch_size, T = b.max_len, C = b.max_chars;
  b.word_ids.assign(B * T, Vocabulary::kPad);
  b.label_ids.assign(B * T, -1);
  b.char_lengths.assign(B * T, 0);
  b.char_ids.assign(B * T * C, Vocabulary::kPad);
  for (std::size_t r = 0; r < B; ++r) {
    const Sentence& s = corpus[members[r]];
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.word_ids[r * T + t] = words.encode(s.tokens[t]);
      if (auto id = labels.find(s.labels[t])) b.label_ids[r * T + t] = *id;
      const auto& chars = s.char_ids[t];
      b.char_lengths[r * T + t] = static_cast<int>(chars.size());
      std::copy(chars.begin(), chars.end(), b.char_ids.begin() + (r * T + t) * C);
    }
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<Sentence>& corpus, const Vocabulary& words,
                                const Vocabulary& labels, std::size_t token_budget, Rng& rng,
                                bool shuffle, std::size_t min_chars) {
  std::vector<Batch> out;
  for (const auto& group : plan_batches(corpus, token_budget, rng, shuffle)) {
    out.push_back(build_batch(corpus, group, words, labels, min_chars));
  }
  return out;
}

}  // namespace gcdt
