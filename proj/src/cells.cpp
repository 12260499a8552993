// SPDX-License-Identifier: Apache-2.0
#include "gcdt/cells.hpp"

#include "gcdt/errors.hpp"

namespace gcdt {

namespace {

Tensor zero_bias(std::size_t hidden) { return Tensor::matrix(1, hidden); }

// sigmoid(a W_a + b W_b + bias)
ad::Var gate(ad::Graph& g, const ad::Var& a, const ad::Var& w_a, const ad::Var& b,
             const ad::Var& w_b, const ad::Var& bias) {
  return g.sigmoid(g.add_bias(g.add(g.matmul(a, w_a), g.matmul(b, w_b)), bias));
}

// (1 - z) * h + z * c
ad::Var interpolate(ad::Graph& g, const ad::Var& z, const ad::Var& h, const ad::Var& c) {
  return g.add(g.mul(g.one_minus(z), h), g.mul(z, c));
}

void check_state(const char* cell, const ad::Var& x, std::size_t input, const ad::Var& h,
                 std::size_t hidden) {
  if (x.cols() != input || h.cols() != hidden || x.rows() != h.rows()) {
    throw ShapeError(std::string(cell) + ": input " + shape_str(x.shape()) + " and state " +
                     shape_str(h.shape()) + " do not fit a " + std::to_string(input) + " -> " +
                     std::to_string(hidden) + " cell");
  }
}

}  // namespace

CellKind parse_cell_kind(const std::string& name) {
  if (name == "dt") return CellKind::kDt;
  if (name == "gru") return CellKind::kGru;
  throw ConfigError("unknown cell kind '" + name + "'");
}

const char* cell_kind_name(CellKind kind) { return kind == CellKind::kDt ? "dt" : "gru"; }

std::size_t hidden_size(const RecurrentParams& params) {
  return std::visit([](const auto& p) { return p.hidden(); }, params);
}

CellKind kind_of(const RecurrentParams& params) {
  return std::holds_alternative<DTBlockParams>(params) ? CellKind::kDt : CellKind::kGru;
}

LGRUParams make_lgru(ParamStore& s, const std::string& prefix, std::size_t in, std::size_t h,
                     Rng& rng) {
  LGRUParams p;
  p.w_xh = s.add(prefix + ".w_xh", glorot_uniform(in, h, rng));
  p.w_hh = s.add(prefix + ".w_hh", glorot_uniform(h, h, rng));
  p.w_x = s.add(prefix + ".w_x", glorot_uniform(in, h, rng));
  p.w_xr = s.add(prefix + ".w_xr", glorot_uniform(in, h, rng));
  p.w_hr = s.add(prefix + ".w_hr", glorot_uniform(h, h, rng));
  p.w_xz = s.add(prefix + ".w_xz", glorot_uniform(in, h, rng));
  p.w_hz = s.add(prefix + ".w_hz", glorot_uniform(h, h, rng));
  p.w_xl = s.add(prefix + ".w_xl", glorot_uniform(in, h, rng));
  p.w_hl = s.add(prefix + ".w_hl", glorot_uniform(h, h, rng));
  p.b_r = s.add(prefix + ".b_r", zero_bias(h));
  p.b_z = s.add(prefix + ".b_z", zero_bias(h));
  p.b_l = s.add(prefix + ".b_l", zero_bias(h));
  p.b_h = s.add(prefix + ".b_h", zero_bias(h));
  return p;
}

TGRUParams make_tgru(ParamStore& s, const std::string& prefix, std::size_t h, Rng& rng) {
  TGRUParams p;
  p.w_h = s.add(prefix + ".w_h", glorot_uniform(h, h, rng));
  p.w_r = s.add(prefix + ".w_r", glorot_uniform(h, h, rng));
  p.w_z = s.add(prefix + ".w_z", glorot_uniform(h, h, rng));
  p.b_h = s.add(prefix + ".b_h", zero_bias(h));
  p.b_r = s.add(prefix + ".b_r", zero_bias(h));
  p.b_z = s.add(prefix + ".b_z", zero_bias(h));
  return p;
}

DTBlockParams make_dt_block(ParamStore& s, const std::string& prefix, std::size_t in,
                            std::size_t h, std::size_t transitions, Rng& rng) {
  DTBlockParams p;
  p.lgru = make_lgru(s, prefix + ".lgru", in, h, rng);
  for (std::size_t j = 1; j <= transitions; ++j) {
    p.transitions.push_back(make_tgru(s, prefix + ".tgru" + std::to_string(j), h, rng));
  }
  return p;
}

GRUParams make_gru(ParamStore& s, const std::string& prefix, std::size_t in, std::size_t h,
                   Rng& rng) {
  GRUParams p;
  p.w_xr = s.add(prefix + ".w_xr", glorot_uniform(in, h, rng));
  p.w_hr = s.add(prefix + ".w_hr", glorot_uniform(h, h, rng));
  p.w_xz = s.add(prefix + ".w_xz", glorot_uniform(in, h, rng));
  p.w_hz = s.add(prefix + ".w_hz", glorot_uniform(h, h, rng));
  p.w_xh = s.add(prefix + ".w_xh", glorot_uniform(in, h, rng));
  p.w_hh = s.add(prefix + ".w_hh", glorot_uniform(h, h, rng));
  p.b_r = s.add(prefix + ".b_r", zero_bias(h));
  p.b_z = s.add(prefix + ".b_z", zero_bias(h));
  p.b_h = s.add(prefix + ".b_h", zero_bias(h));
  return p;
}

RecurrentParams make_recurrent(ParamStore& s, const std::string& prefix, CellKind kind,
                               std::size_t in, std::size_t h, std::size_t transitions, Rng& rng) {
  if (kind == CellKind::kDt) return make_dt_block(s, prefix, in, h, transitions, rng);
  return make_gru(s, prefix + ".gru", in, h, rng);
}

ad::Var lgru_step(ad::Graph& g, const ad::Var& x, const ad::Var& h, const LGRUParams& p) {
  check_state("lgru_step", x, p.input_dim(), h, p.hidden());
  const ad::Var r = gate(g, x, p.w_xr, h, p.w_hr, p.b_r);
  const ad::Var z = gate(g, x, p.w_xz, h, p.w_hz, p.b_z);
  const ad::Var l = gate(g, x, p.w_xl, h, p.w_hl, p.b_l);
  const ad::Var recurrent = g.mul(r, g.matmul(h, p.w_hh));
  const ad::Var squashed = g.tanh(g.add_bias(g.add(g.matmul(x, p.w_xh), recurrent), p.b_h));
  const ad::Var candidate = g.add(squashed, g.mul(l, g.matmul(x, p.w_x)));
  return interpolate(g, z, h, candidate);
}

ad::Var tgru_step(ad::Graph& g, const ad::Var& h, const TGRUParams& p) {
  check_state("tgru_step", h, p.hidden(), h, p.hidden());
  const ad::Var r = g.sigmoid(g.add_bias(g.matmul(h, p.w_r), p.b_r));
  const ad::Var z = g.sigmoid(g.add_bias(g.matmul(h, p.w_z), p.b_z));
  const ad::Var candidate = g.tanh(g.add_bias(g.mul(r, g.matmul(h, p.w_h)), p.b_h));
  return interpolate(g, z, h, candidate);
}

ad::Var gru_step(ad::Graph& g, const ad::Var& x, const ad::Var& h, const GRUParams& p) {
  check_state("gru_step", x, p.input_dim(), h, p.hidden());
  const ad::Var r = gate(g, x, p.w_xr, h, p.w_hr, p.b_r);
  const ad::Var z = gate(g, x, p.w_xz, h, p.w_hz, p.b_z);
  const ad::Var recurrent = g.mul(r, g.matmul(h, p.w_hh));
  const ad::Var candidate = g.tanh(g.add_bias(g.add(g.matmul(x, p.w_xh), recurrent), p.b_h));
  return interpolate(g, z, h, candidate);
}

ad::Var dt_step(ad::Graph& g, const ad::Var& x, const ad::Var& h_prev, const DTBlockParams& p,
                InnerMasks inner) {
  if (!inner.empty() && inner.size() != p.depth()) {
    throw ShapeError("dt_step: one inner dropout mask per transition required");
  }
  ad::Var h = lgru_step(g, x, h_prev, p.lgru);
  for (std::size_t j = 0; j < p.transitions.size(); ++j) {
    if (!inner.empty()) h = g.mul_const(h, inner[j]);
    h = tgru_step(g, h, p.transitions[j]);
  }
  return h;
}

ad::Var recurrent_step(ad::Graph& g, const ad::Var& x, const ad::Var& h_prev,
                       const RecurrentParams& p, InnerMasks inner) {
  if (const auto* dt = std::get_if<DTBlockParams>(&p)) return dt_step(g, x, h_prev, *dt, inner);
  return gru_step(g, x, h_prev, std::get<GRUParams>(p));
}

std::vector<ad::Var> run_direction(ad::Graph& g, std::span<const ad::Var> inputs,
                                   const RecurrentParams& p, std::span<const ad::RowMask> live,
                                   bool reverse, const RecurrentDropout& dropout) {
  if (inputs.size() != live.size()) throw ShapeError("run_direction: one mask per step required");
  const std::size_t steps = inputs.size();
  std::vector<ad::Var> out(steps);
  if (steps == 0) return out;
  const std::size_t batch = inputs[0].rows(), hidden = hidden_size(p);
  const ad::Var zeros = ad::Graph::constant(Tensor::matrix(batch, hidden));

  const bool drop = dropout.training && dropout.hidden_rate > 0.0;
  if (drop && !dropout.rng) throw std::invalid_argument("run_direction: dropout needs an rng");
  const double keep = 1.0 - dropout.hidden_rate;
  Tensor out_mask;
  std::vector<Tensor> inner;
  if (drop) {
    out_mask = ad::dropout_mask({batch, hidden}, keep, *dropout.rng);
    if (dropout.inner) {
      if (const auto* dt = std::get_if<DTBlockParams>(&p)) {
        for (std::size_t j = 0; j < dt->depth(); ++j) {
          inner.push_back(ad::dropout_mask({batch, hidden}, keep, *dropout.rng));
        }
      }
    }
  }

  ad::Var h = zeros;
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    ad::Var next = recurrent_step(g, inputs[t], h, p, inner);
    if (drop) next = g.mul_const(next, out_mask);
    h = g.where_rows(live[t], next, h);
    out[t] = g.where_rows(live[t], next, zeros);
  }
  return out;
}

std::vector<ad::Var> run_bidirectional(ad::Graph& g, std::span<const ad::Var> inputs,
                                       const RecurrentParams& fwd, const RecurrentParams& bwd,
                                       std::span<const ad::RowMask> live,
                                       const RecurrentDropout& dropout) {
  if (kind_of(fwd) != kind_of(bwd)) {
    throw std::invalid_argument("run_bidirectional: directions use different cell kinds");
  }
  if (hidden_size(fwd) != hidden_size(bwd)) {
    throw ShapeError("run_bidirectional: directions have different hidden sizes");
  }
  const auto forward = run_direction(g, inputs, fwd, live, false, dropout);
  const auto backward = run_direction(g, inputs, bwd, live, true, dropout);
  std::vector<ad::Var> out(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) out[t] = g.concat({forward[t], backward[t]});
  return out;
}

}  // namespace gcdt
