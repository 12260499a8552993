// SPDX-License-Identifier: Apache-2.0
#include "gcdt/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gcdt/errors.hpp"

namespace gcdt {

Tensor random_word_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(dim));
  Tensor t = Tensor::matrix(rows, dim);
  for (auto& x : t.data()) x = rng.uniform(-bound, bound);
  return t;
}

PretrainedTable random_pretrained(std::size_t rows, std::size_t dim, Rng& rng, bool frozen) {
  Tensor m = random_word_rows(rows, dim, rng);
  for (std::size_t j = 0; j < dim; ++j) m.at(Vocabulary::kPad, j) = 0.0;
  return {ad::Var(std::move(m), !frozen), frozen};
}

PretrainedTable load_pretrained(std::istream& in, std::size_t dim, const Vocabulary& vocab,
                                Rng& rng, bool frozen) {
  if (dim == 0) throw DataError("pretrained: dimension must be positive");
  Tensor m = random_word_rows(vocab.size(), dim, rng);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    for (std::string tok; fields >> tok;) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError("pretrained: line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    if (values.size() != dim) {
      throw DataError("pretrained: line " + std::to_string(line_no) + " has " +
                      std::to_string(values.size()) + " components, expected " + std::to_string(dim));
    }
    const auto id = vocab.find(word);
    if (!id || *id == Vocabulary::kPad || *id == Vocabulary::kUnk) continue;
    std::copy(values.begin(), values.end(), &m.at(*id, 0));
  }
  for (std::size_t j = 0; j < dim; ++j) m.at(Vocabulary::kPad, j) = 0.0;
  return {ad::Var(std::move(m), !frozen), frozen};
}

ad::Var char_cnn_forward(ad::Graph& g, const CharCNN& cnn, std::span<const int> char_ids,
                         std::size_t words, std::size_t chars, std::span<const int> lengths) {
  const std::size_t k = cnn.width;
  if (chars < k) throw ShapeError("char_cnn: words padded to " + std::to_string(chars) +
                                  " chars, filter width is " + std::to_string(k));
  if (char_ids.size() != words * chars) throw ShapeError("char_cnn: id cube size mismatch");
  if (!lengths.empty() && lengths.size() != words) throw ShapeError("char_cnn: one length per word");
  if (cnn.filters.rows() != k * cnn.char_dim()) {
    throw ShapeError("char_cnn: filter bank " + shape_str(cnn.filters.shape()) +
                     " does not match width " + std::to_string(k) + " x char dim " +
                     std::to_string(cnn.char_dim()));
  }
  const std::size_t windows = chars - k + 1;
  std::vector<ad::Var> responses;
  std::vector<ad::RowMask> live;
  std::vector<int> ids(words);
  std::vector<ad::Var> parts(k);
  for (std::size_t p = 0; p < windows; ++p) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t w = 0; w < words; ++w) ids[w] = char_ids[w * chars + p + j];
      parts[j] = g.gather(cnn.table, ids);
    }
    responses.push_back(g.add_bias(g.matmul(g.concat(parts), cnn.filters), cnn.bias));
    ad::RowMask mask(words, 1);
    if (!lengths.empty()) {
      for (std::size_t w = 0; w < words; ++w) {
        const std::size_t len = std::max<std::size_t>(static_cast<std::size_t>(lengths[w]), k);
        mask[w] = p + k <= len ? 1 : 0;
      }
    }
    live.push_back(std::move(mask));
  }
  return g.pool_steps(responses, live, ad::Pool::kMax);
}

SubtokenPool parse_subtoken_pool(const std::string& name) {
  if (name == "first") return SubtokenPool::kFirst;
  if (name == "mean") return SubtokenPool::kMean;
  if (name == "max") return SubtokenPool::kMax;
  throw ConfigError("unknown sub-token pooling '" + name + "'");
}

Tensor align_external(const ExternalSentence& s, SubtokenPool mode) {
  const std::size_t dim = s.subtokens.cols();
  if (s.token_of.size() != s.subtokens.rows()) {
    throw DataError("external: alignment has " + std::to_string(s.token_of.size()) +
                    " entries for " + std::to_string(s.subtokens.rows()) + " sub-tokens");
  }
  Tensor out = Tensor::matrix(s.tokens, dim);
  std::vector<std::size_t> count(s.tokens, 0);
  for (std::size_t i = 0; i < s.token_of.size(); ++i) {
    const std::size_t t = s.token_of[i];
    if (t >= s.tokens) throw DataError("external: sub-token aligned past the last token");
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = s.subtokens.at(i, j);
      double& o = out.at(t, j);
      switch (mode) {
        case SubtokenPool::kFirst:
          if (count[t] == 0) o = v;
          break;
        case SubtokenPool::kMean: o += v; break;
        case SubtokenPool::kMax:
          if (count[t] == 0 || v > o) o = v;
          break;
      }
    }
    ++count[t];
  }
  for (std::size_t t = 0; t < s.tokens; ++t) {
    if (count[t] == 0) throw DataError("external: token " + std::to_string(t) + " has no sub-tokens");
    if (mode == SubtokenPool::kMean) {
      for (std::size_t j = 0; j < dim; ++j) out.at(t, j) /= static_cast<double>(count[t]);
    }
  }
  return out;
}

std::vector<Tensor> align_external(const ExternalEmbeddingSet& set) {
  std::vector<Tensor> out;
  out.reserve(set.sentences.size());
  for (const auto& s : set.sentences) out.push_back(align_external(s, set.mode));
  return out;
}

ExternalEmbeddingSet read_external(std::istream& in, SubtokenPool mode) {
  ExternalEmbeddingSet set;
  set.mode = mode;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](std::istringstream& fields) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
      fields = std::istringstream(line);
      return true;
    }
    return false;
  };
  auto fail = [&](const std::string& what) {
    throw DataError("external: line " + std::to_string(line_no) + ": " + what);
  };
  std::istringstream fields;
  while (next_line(fields)) {
    std::string tag;
    std::size_t tokens = 0, subtokens = 0, dim = 0;
    if (!(fields >> tag >> tokens >> subtokens >> dim) || tag != "sentence") {
      fail("expected 'sentence <tokens> <subtokens> <dim>'");
    }
    if (tokens == 0 || subtokens == 0 || dim == 0) fail("counts must be positive");
    if (set.dim == 0) set.dim = dim;
    if (dim != set.dim) fail("dimension differs from earlier records");
    ExternalSentence s;
    s.tokens = tokens;
    s.subtokens = Tensor::matrix(subtokens, dim);
    for (std::size_t i = 0; i < subtokens; ++i) {
      if (!next_line(fields)) fail("record ends early");
      std::size_t token = 0;
      if (!(fields >> token)) fail("missing token index");
      s.token_of.push_back(token);
      for (std::size_t j = 0; j < dim; ++j) {
        if (!(fields >> s.subtokens.at(i, j))) fail("expected " + std::to_string(dim) + " components");
      }
      std::string extra;
      if (fields >> extra) fail("too many components");
    }
    set.sentences.push_back(std::move(s));
  }
  return set;
}

void write_external(std::ostream& out, const ExternalEmbeddingSet& set) {
  out.precision(17);
  for (const auto& s : set.sentences) {
    out << "sentence " << s.tokens << ' ' << s.subtokens.rows() << ' ' << s.subtokens.cols() << '\n';
    for (std::size_t i = 0; i < s.subtokens.rows(); ++i) {
      out << s.token_of[i];
      for (std::size_t j = 0; j < s.subtokens.cols(); ++j) out << ' ' << s.subtokens.at(i, j);
      out << '\n';
    }
  }
}

}  // namespace gcdt
