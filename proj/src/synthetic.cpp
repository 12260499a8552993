// SPDX-License-Identifier: Apache-2.0
#include "gcdt/synthetic.hpp"

#include <stdexcept>
#include <string>

namespace gcdt {

std::vector<Sentence> synthetic_corpus(const SyntheticSpec& spec, Rng& rng) {
  const std::size_t plain = spec.vocab / 2;
  if (spec.types == 0 || spec.vocab - plain < spec.types || spec.min_len == 0 ||
      spec.max_len < spec.min_len || spec.max_chunk == 0) {
    throw std::invalid_argument("synthetic_corpus: inconsistent spec");
  }
  const std::size_t per_type = (spec.vocab - plain) / spec.types;
  const std::string types = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  auto type_name = [&](std::size_t k) {
    return k < types.size() ? std::string("T") + types[k] : "T" + std::to_string(k);
  };

  std::vector<Sentence> corpus;
  for (std::size_t s = 0; s < spec.sentences; ++s) {
    Sentence sent;
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    while (sent.tokens.size() < len) {
      const std::size_t room = len - sent.tokens.size();
      const bool chunk_allowed = sent.labels.empty() || sent.labels.back() == "O";
      if (chunk_allowed && rng.uniform() < 0.45) {
        const std::size_t k = rng.below(spec.types);
        const std::size_t width = 1 + rng.below(std::min(spec.max_chunk, room));
        const std::string type = type_name(k);
        for (std::size_t i = 0; i < width; ++i) {
          sent.tokens.push_back("w" + std::to_string(plain + k * per_type + rng.below(per_type)));
          if (width == 1) sent.labels.push_back("S-" + type);
          else if (i == 0) sent.labels.push_back("B-" + type);
          else if (i + 1 == width) sent.labels.push_back("E-" + type);
          else sent.labels.push_back("I-" + type);
        }
      } else {
        sent.tokens.push_back("w" + std::to_string(rng.below(plain)));
        sent.labels.push_back("O");
      }
    }
    corpus.push_back(std::move(sent));
  }
  return corpus;
}

}  // namespace gcdt
