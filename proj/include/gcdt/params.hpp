// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gcdt/autodiff.hpp"
#include "gcdt/tensor.hpp"

namespace gcdt {

// Uniform Glorot/Xavier draw with bound sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);
double glorot_bound(std::size_t rows, std::size_t cols);

struct ParamEntry {
  std::string name;
  ad::Var var;
  bool trainable = true;
};

// Named registry of every tensor a model owns, in registration order.
class ParamStore {
 public:
  ad::Var add(const std::string& name, Tensor init, bool trainable = true);
  // Register a tensor created elsewhere (e.g. a loaded word table).
  void add_existing(const std::string& name, ad::Var var, bool trainable);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry* find(const std::string& name) const;
  std::size_t trainable_count() const;
  void zero_grad();

 private:
  std::vector<ParamEntry> entries_;
};

}  // namespace gcdt
