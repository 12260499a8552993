// SPDX-License-Identifier: Apache-2.0
#include "gcdt/params.hpp"

#include <cmath>
#include <stdexcept>

namespace gcdt {

double glorot_bound(std::size_t rows, std::size_t cols) {
  return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = glorot_bound(rows, cols);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& x : t.data()) x = rng.uniform(-bound, bound);
  return t;
}

ad::Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (find(name)) throw std::logic_error("parameter registered twice: " + name);
  ad::Var v(std::move(init), trainable);
  entries_.push_back({name, v, trainable});
  return v;
}

void ParamStore::add_existing(const std::string& name, ad::Var var, bool trainable) {
  if (find(name)) throw std::logic_error("parameter registered twice: " + name);
  var.set_requires_grad(trainable);
  entries_.push_back({name, std::move(var), trainable});
}

const ParamEntry* ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.var.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

}  // namespace gcdt
