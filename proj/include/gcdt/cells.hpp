// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gcdt/autodiff.hpp"
#include "gcdt/params.hpp"

namespace gcdt {

// Inputs and states are batch-major: x is B x input, h is B x hidden, and
// weights multiply from the right (x * W).

// Linear-transformation enhanced GRU:
//   r = sigmoid(x W_xr + h W_hr + b_r)
//   z = sigmoid(x W_xz + h W_hz + b_z)
//   l = sigmoid(x W_xl + h W_hl + b_l)
//   c = tanh(x W_xh + r * (h W_hh) + b_h) + l * (x W_x)
//   h' = (1 - z) * h + z * c
struct LGRUParams {
  ad::Var w_xh, w_hh, w_x, w_xr, w_hr, w_xz, w_hz, w_xl, w_hl;
  ad::Var b_r, b_z, b_l, b_h;

  std::size_t input_dim() const { return w_xh.rows(); }
  std::size_t hidden() const { return w_hh.cols(); }
};

// Transition GRU, fed only by the state beneath it:
//   r = sigmoid(h W_r + b_r), z = sigmoid(h W_z + b_z)
//   c = tanh(r * (h W_h) + b_h)
//   h' = (1 - z) * h + z * c
struct TGRUParams {
  ad::Var w_h, w_r, w_z;
  ad::Var b_h, b_r, b_z;

  std::size_t hidden() const { return w_h.cols(); }
};

// One L-GRU followed by a chain of transition GRUs, each with its own weights.
struct DTBlockParams {
  LGRUParams lgru;
  std::vector<TGRUParams> transitions;

  std::size_t hidden() const { return lgru.hidden(); }
  std::size_t depth() const { return transitions.size(); }
};

// Conventional GRU, candidate c = tanh(x W_xh + r * (h W_hh) + b_h).
struct GRUParams {
  ad::Var w_xr, w_hr, w_xz, w_hz, w_xh, w_hh;
  ad::Var b_r, b_z, b_h;

  std::size_t input_dim() const { return w_xh.rows(); }
  std::size_t hidden() const { return w_hh.cols(); }
};

enum class CellKind { kDt, kGru };
CellKind parse_cell_kind(const std::string& name);
const char* cell_kind_name(CellKind kind);

using RecurrentParams = std::variant<DTBlockParams, GRUParams>;

std::size_t hidden_size(const RecurrentParams& params);
CellKind kind_of(const RecurrentParams& params);

// Register freshly initialized weights (Glorot matrices, zero biases) under
// "<prefix>.<name>".
LGRUParams make_lgru(ParamStore& store, const std::string& prefix, std::size_t input,
                     std::size_t hidden, Rng& rng);
TGRUParams make_tgru(ParamStore& store, const std::string& prefix, std::size_t hidden, Rng& rng);
DTBlockParams make_dt_block(ParamStore& store, const std::string& prefix, std::size_t input,
                            std::size_t hidden, std::size_t transitions, Rng& rng);
GRUParams make_gru(ParamStore& store, const std::string& prefix, std::size_t input,
                   std::size_t hidden, Rng& rng);
RecurrentParams make_recurrent(ParamStore& store, const std::string& prefix, CellKind kind,
                               std::size_t input, std::size_t hidden, std::size_t transitions,
                               Rng& rng);

ad::Var lgru_step(ad::Graph& g, const ad::Var& x, const ad::Var& h_prev, const LGRUParams& p);
ad::Var tgru_step(ad::Graph& g, const ad::Var& h_below, const TGRUParams& p);
ad::Var gru_step(ad::Graph& g, const ad::Var& x, const ad::Var& h_prev, const GRUParams& p);

// Optional dropout masks (B x hidden, inverted scaling) applied after the
// L-GRU and after each transition except the last.
using InnerMasks = std::span<const Tensor>;

// Depth-L state after threading the L-GRU output through every transition.
ad::Var dt_step(ad::Graph& g, const ad::Var& x, const ad::Var& h_prev, const DTBlockParams& p,
                InnerMasks inner = {});
ad::Var recurrent_step(ad::Graph& g, const ad::Var& x, const ad::Var& h_prev,
                       const RecurrentParams& p, InnerMasks inner = {});

// Dropout settings for a recurrent pass. Masks are drawn once per sequence
// and reused at every time step.
struct RecurrentDropout {
  bool training = false;
  double hidden_rate = 0.0;
  bool inner = false;  // also drop between the cells of a transition chain
  Rng* rng = nullptr;
};

// Run one direction over per-step inputs (each B x d). live[t][b] marks
// real tokens. Padded positions output zero rows and leave the carried
// state untouched; the initial state is zero.
std::vector<ad::Var> run_direction(ad::Graph& g, std::span<const ad::Var> inputs,
                                   const RecurrentParams& p, std::span<const ad::RowMask> live,
                                   bool reverse, const RecurrentDropout& dropout = {});

// Step t of the result is [forward state at t ; backward state at t].
std::vector<ad::Var> run_bidirectional(ad::Graph& g, std::span<const ad::Var> inputs,
                                       const RecurrentParams& fwd, const RecurrentParams& bwd,
                                       std::span<const ad::RowMask> live,
                                       const RecurrentDropout& dropout = {});

}  // namespace gcdt
