// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gcdt {

struct ComponentCheck {
  std::string component;
  double max_rel_error = 0.0;
  std::size_t seeds = 0;
  std::size_t coordinates = 0;
  std::uint64_t worst_seed = 0;
  bool passed = false;
};

// lgru, tgru, dt_block, gru, char_cnn, decoder_step, model_loss.
const std::vector<std::string>& gradcheck_components();

// Finite-difference check of one component at random dims <= 8 for seeds
// base_seed .. base_seed + seeds - 1. Cells are checked on every
// coordinate; the full model samples up to 12 coordinates per tensor.
ComponentCheck check_component(const std::string& component, std::uint64_t base_seed,
                               std::size_t seeds, double tolerance = 1e-4);

std::vector<ComponentCheck> run_gradient_suite(std::uint64_t base_seed = 1, std::size_t seeds = 20,
                                               double tolerance = 1e-4);

}  // namespace gcdt
