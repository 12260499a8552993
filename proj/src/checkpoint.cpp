// SPDX-License-Identifier: Apache-2.0
#include "gcdt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "gcdt/config.hpp"
#include "gcdt/errors.hpp"

namespace gcdt {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'D', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void tensor(const Tensor& t) {
    u64(t.shape().size());
    for (auto d : t.shape()) u64(d);
    for (double x : t.data()) f64(x);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const auto n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const auto rank = u64();
    if (rank == 0 || rank > 4) fail("tensor rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      shape.push_back(u64());
      if (shape.back() == 0) fail("zero tensor extent");
      total *= shape.back();
    }
    need(total * 8);
    std::vector<double> values(total);
    for (auto& x : values) x = f64();
    return Tensor(shape, std::move(values));
  }
  std::uint64_t count() {
    const auto n = u64();
    if (n > in_.size()) fail("implausible element count");
    return n;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  [[noreturn]] static void fail(const std::string& what) { throw DataError("checkpoint: " + what); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) fail("file is truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_vocab(Writer& w, const Vocabulary& v) {
  w.u64(v.size());
  for (const auto& item : v.items()) w.text(item);
}

Vocabulary read_vocab(Reader& r, VocabKind kind) {
  const auto n = r.count();
  std::vector<std::string> items;
  for (std::uint64_t i = 0; i < n; ++i) items.push_back(r.text());
  return Vocabulary::from_items(kind, items);
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Checkpoint capture(const Model& model, const Vocabularies& vocabs, const std::string& config_text) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  ckpt.model = model.config();
  ckpt.model_digest = fnv1a(render_model_config(model.config()));
  ckpt.vocabs = vocabs;
  for (const auto& e : model.params().entries()) ckpt.tensors.push_back({e.name, e.trainable, e.var.value()});
  return ckpt;
}

void attach_optimizer(Checkpoint& ckpt, const AdamState& adam) {
  ckpt.adam_beta1 = adam.beta1();
  ckpt.adam_beta2 = adam.beta2();
  ckpt.adam_epsilon = adam.epsilon();
  ckpt.adam_steps = adam.steps();
  ckpt.adam_m = adam.first_moment();
  ckpt.adam_v = adam.second_moment();
}

std::string serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.u64(kVersion);
  w.u64(ckpt.model_digest);
  w.text(render_model_config(ckpt.model));
  w.text(ckpt.config_text);
  write_vocab(w, ckpt.vocabs.words);
  write_vocab(w, ckpt.vocabs.chars);
  write_vocab(w, ckpt.vocabs.labels);
  w.u64(ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    w.text(t.name);
    w.u64(t.trainable ? 1 : 0);
    w.tensor(t.value);
  }
  w.f64(ckpt.adam_beta1);
  w.f64(ckpt.adam_beta2);
  w.f64(ckpt.adam_epsilon);
  w.u64(ckpt.adam_steps);
  w.u64(ckpt.adam_m.size());
  for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i) {
    w.tensor(ckpt.adam_m[i]);
    w.tensor(ckpt.adam_v.at(i));
  }
  w.u64(ckpt.step);
  w.u64(ckpt.epoch);
  w.f64(ckpt.best_dev_f1);
  w.text(ckpt.rng_state);
  const auto digest = fnv1a(w.bytes());
  w.u64(digest);
  return std::move(w.bytes());
}

Checkpoint deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    Reader::fail("not a checkpoint file");
  }
  {
    Reader tail(bytes.substr(bytes.size() - 8));
    if (tail.u64() != fnv1a(bytes.substr(0, bytes.size() - 8))) Reader::fail("content digest mismatch");
  }
  Reader r(bytes.substr(0, bytes.size() - 8));
  r.raw(sizeof kMagic);
  if (const auto version = r.u64(); version != kVersion) {
    Reader::fail("unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.model_digest = r.u64();
  const std::string model_text = r.text();
  if (fnv1a(model_text) != ckpt.model_digest) Reader::fail("model config digest mismatch");
  try {
    ckpt.model = parse_model_config(model_text);
  } catch (const ConfigError& e) {
    Reader::fail(std::string("stored model config is invalid: ") + e.what());
  }
  ckpt.config_text = r.text();
  ckpt.vocabs.words = read_vocab(r, VocabKind::kWord);
  ckpt.vocabs.chars = read_vocab(r, VocabKind::kChar);
  ckpt.vocabs.labels = read_vocab(r, VocabKind::kLabel);
  const auto tensors = r.count();
  for (std::uint64_t i = 0; i < tensors; ++i) {
    NamedTensor t;
    t.name = r.text();
    t.trainable = r.u64() != 0;
    t.value = r.tensor();
    ckpt.tensors.push_back(std::move(t));
  }
  ckpt.adam_beta1 = r.f64();
  ckpt.adam_beta2 = r.f64();
  ckpt.adam_epsilon = r.f64();
  ckpt.adam_steps = r.u64();
  const auto moments = r.count();
  for (std::uint64_t i = 0; i < moments; ++i) {
    ckpt.adam_m.push_back(r.tensor());
    ckpt.adam_v.push_back(r.tensor());
  }
  ckpt.step = r.u64();
  ckpt.epoch = r.u64();
  ckpt.best_dev_f1 = r.f64();
  ckpt.rng_state = r.text();
  if (r.position() != bytes.size() - 8) Reader::fail("trailing bytes after the last field");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt);
  const std::string temp = path + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("checkpoint: cannot write '" + temp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw DataError("checkpoint: write to '" + temp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(temp, path, ec);
  if (ec) throw DataError("checkpoint: cannot move '" + temp + "' into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Model restore_model(const Checkpoint& ckpt) {
  Rng scratch(0);
  Model model(ckpt.model, ckpt.vocabs.words.size(), ckpt.vocabs.chars.size(), ckpt.vocabs.labels.size(),
              scratch);
  const auto& entries = model.params().entries();
  if (entries.size() != ckpt.tensors.size()) {
    throw DataError("checkpoint: holds " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                    std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& stored = ckpt.tensors[i];
    if (stored.name != entries[i].name || stored.value.shape() != entries[i].var.shape()) {
      throw DataError("checkpoint: tensor '" + stored.name + "' " + shape_str(stored.value.shape()) +
                      " does not match model parameter '" + entries[i].name + "' " +
                      shape_str(entries[i].var.shape()));
    }
    ad::Var v = entries[i].var;
    v.mutable_value() = stored.value;
  }
  return model;
}

AdamState restore_optimizer(const Checkpoint& ckpt, const Model& model) {
  AdamState adam(model.params(), ckpt.adam_beta1, ckpt.adam_beta2, ckpt.adam_epsilon);
  if (!ckpt.adam_m.empty() || ckpt.adam_steps > 0) adam.restore(ckpt.adam_steps, ckpt.adam_m, ckpt.adam_v);
  return adam;
}

}  // namespace gcdt
