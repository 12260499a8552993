// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "gcdt/cells.hpp"
#include "gcdt/errors.hpp"
#include "gcdt/gradcheck.hpp"

using namespace gcdt;
using ad::Graph;
using ad::Var;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_all(ParamStore& store, double value) {
  for (const auto& e : store.entries()) {
    Var v = e.var;
    v.mutable_value().fill(value);
  }
}

void fill_weights(ParamStore& store, double value) {
  for (const auto& e : store.entries()) {
    Var v = e.var;
    const bool bias = e.name.substr(e.name.rfind('.') + 1).starts_with("b_");
    v.mutable_value().fill(bias ? 0.0 : value);
  }
}

Tensor row(std::initializer_list<double> v) { return Tensor::row(v); }

Tensor random_rows(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (auto& x : t.data()) x = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST_CASE("zero parameters halve the state in every cell") {
  Rng rng(1);
  ParamStore store;
  const auto lgru = make_lgru(store, "l", 3, 4, rng);
  const auto tgru = make_tgru(store, "t", 4, rng);
  const auto gru = make_gru(store, "g", 3, 4, rng);
  fill_all(store, 0.0);
  const Var x(row({0.3, -1.2, 2.0}));
  const Var v(row({1.0, -0.5, 0.25, 8.0}));
  const Var zero(Tensor::matrix(1, 4));
  Graph g;
  for (const Var& out : {lgru_step(g, x, v, lgru), tgru_step(g, v, tgru), gru_step(g, x, v, gru)}) {
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.value()[i] == 0.5 * v.value()[i]);
  }
  for (const Var& out : {lgru_step(g, x, zero, lgru), gru_step(g, x, zero, gru), tgru_step(g, zero, tgru)}) {
    for (double y : out.value().data()) CHECK(y == 0.0);
  }
}

TEST_CASE("T-GRU with random weights and zero biases keeps a zero state") {
  Rng rng(2);
  ParamStore store;
  const auto tgru = make_tgru(store, "t", 5, rng);
  Graph g;
  const Var out = tgru_step(g, Var(Tensor::matrix(2, 5)), tgru);
  for (double y : out.value().data()) CHECK(y == 0.0);
}

TEST_CASE("scalar hand computations") {
  Rng rng(0);
  const double s1 = sigm(1.0);
  SUBCASE("L-GRU") {
    ParamStore store;
    const auto p = make_lgru(store, "l", 1, 1, rng);
    fill_weights(store, 1.0);
    Graph g;
    const Var first = lgru_step(g, Var(row({0.0})), Var(row({0.0})), p);
    CHECK(first.value()[0] == 0.0);
    const Var second = lgru_step(g, Var(row({1.0})), Var(row({0.0})), p);
    // Linear path sits outside the squashing: tanh(1 + r*0) + l*1.
    const double candidate = std::tanh(1.0) + s1 * 1.0;
    CHECK(second.value()[0] == doctest::Approx(s1 * candidate).epsilon(1e-14));
    CHECK(second.value()[0] == doctest::Approx(1.0912165865344627).epsilon(1e-14));
  }
  SUBCASE("T-GRU") {
    ParamStore store;
    const auto p = make_tgru(store, "t", 1, rng);
    fill_weights(store, 1.0);
    Graph g;
    const Var out = tgru_step(g, Var(row({1.0})), p);
    const double expect = (1.0 - s1) + s1 * std::tanh(s1);
    CHECK(out.value()[0] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(out.value()[0] == doctest::Approx(0.7249118315193959).epsilon(1e-14));
  }
  SUBCASE("GRU") {
    ParamStore store;
    const auto p = make_gru(store, "g", 1, 1, rng);
    fill_weights(store, 1.0);
    Graph g;
    CHECK(gru_step(g, Var(row({0.0})), Var(row({0.0})), p).value()[0] == 0.0);
    const Var out = gru_step(g, Var(row({1.0})), Var(row({0.0})), p);
    CHECK(out.value()[0] == doctest::Approx(s1 * std::tanh(1.0)).epsilon(1e-14));
    CHECK(out.value()[0] == doctest::Approx(0.5567699411459397).epsilon(1e-14));
  }
}

TEST_CASE("deep transition block composition") {
  Rng rng(3);
  SUBCASE("L = 0 equals the bare L-GRU bit for bit") {
    ParamStore store;
    const auto block = make_dt_block(store, "dt", 3, 4, 0, rng);
    for (const auto& e : store.entries()) {
      Var v = e.var;
      for (auto& x : v.mutable_value().data()) x = rng.uniform(-1, 1);
    }
    const Var x(random_rows(2, 3, rng)), h(random_rows(2, 4, rng));
    Graph g;
    CHECK(dt_step(g, x, h, block).value() == lgru_step(g, x, h, block.lgru).value());
  }
  SUBCASE("zero parameters contract by 2^(L+1)") {
    for (std::size_t L : {0u, 1u, 2u, 4u}) {
      ParamStore store;
      const auto block = make_dt_block(store, "dt", 2, 3, L, rng);
      fill_all(store, 0.0);
      const Var v(row({1.0, -4.0, 0.5}));
      Graph g;
      const Var out = dt_step(g, Var(row({0.7, -0.1})), v, block);
      for (std::size_t i = 0; i < 3; ++i) CHECK(out.value()[i] == std::ldexp(v.value()[i], -static_cast<int>(L + 1)));
    }
  }
  SUBCASE("each transition owns its weights") {
    ParamStore store;
    const auto block = make_dt_block(store, "dt", 2, 3, 3, rng);
    CHECK(block.transitions[0].w_h.node() != block.transitions[1].w_h.node());
    CHECK(store.find("dt.tgru3.w_h") != nullptr);
  }
}

TEST_CASE("shape mismatches are reported") {
  Rng rng(4);
  ParamStore store;
  const auto lgru = make_lgru(store, "l", 3, 4, rng);
  Graph g;
  CHECK_THROWS_AS(lgru_step(g, Var(Tensor::matrix(1, 2)), Var(Tensor::matrix(1, 4)), lgru), ShapeError);
  CHECK_THROWS_AS(lgru_step(g, Var(Tensor::matrix(1, 3)), Var(Tensor::matrix(2, 4)), lgru), ShapeError);
}

TEST_CASE("cell gradients match finite differences") {
  for (const char* name : {"lgru", "tgru", "dt_block", "gru", "char_cnn"}) {
    CAPTURE(name);
    const auto r = check_component(name, 100, 5);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("bidirectional execution") {
  Rng rng(5);
  ParamStore store;
  const auto fwd = make_recurrent(store, "f", CellKind::kDt, 3, 4, 2, rng);
  const auto bwd = make_recurrent(store, "b", CellKind::kDt, 3, 4, 2, rng);

  SUBCASE("T = 1") {
    const Var x(random_rows(1, 3, rng));
    const std::vector<ad::RowMask> live{{1}};
    Graph g;
    const auto out = run_bidirectional(g, std::vector<Var>{x}, fwd, bwd, live);
    const Var zero(Tensor::matrix(1, 4));
    const Tensor f = recurrent_step(g, x, zero, fwd).value();
    const Tensor b = recurrent_step(g, x, zero, bwd).value();
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(out[0].value()[j] == f[j]);
      CHECK(out[0].value()[4 + j] == b[j]);
    }
  }
  SUBCASE("palindrome symmetry with shared parameters") {
    const Tensor a = random_rows(1, 3, rng), b = random_rows(1, 3, rng), c = random_rows(1, 3, rng);
    const std::vector<Var> xs{Var(a), Var(b), Var(c), Var(b), Var(a)};
    const std::vector<ad::RowMask> live(5, ad::RowMask{1});
    Graph g;
    const auto out = run_bidirectional(g, xs, fwd, fwd, live);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t j = 0; j < 4; ++j) CHECK(out[t].value()[j] == out[4 - t].value()[4 + j]);
  }
  SUBCASE("zero parameters give zero output") {
    ParamStore zeros;
    const auto zf = make_recurrent(zeros, "f", CellKind::kGru, 3, 4, 0, rng);
    const auto zb = make_recurrent(zeros, "b", CellKind::kGru, 3, 4, 0, rng);
    fill_all(zeros, 0.0);
    const std::vector<Var> xs{Var(random_rows(2, 3, rng)), Var(random_rows(2, 3, rng))};
    const std::vector<ad::RowMask> live(2, ad::RowMask{1, 1});
    Graph g;
    for (const auto& o : run_bidirectional(g, xs, zf, zb, live))
      for (double y : o.value().data()) CHECK(y == 0.0);
  }
  SUBCASE("mixed cell kinds are rejected") {
    ParamStore other;
    const auto gru = make_recurrent(other, "g", CellKind::kGru, 3, 4, 0, rng);
    const std::vector<Var> xs{Var(random_rows(1, 3, rng))};
    const std::vector<ad::RowMask> live{{1}};
    Graph g;
    CHECK_THROWS(run_bidirectional(g, xs, fwd, gru, live));
  }
  SUBCASE("padding never changes rows at true positions") {
    const std::vector<Tensor> sentence{random_rows(1, 3, rng), random_rows(1, 3, rng), random_rows(1, 3, rng)};
    std::vector<Var> alone;
    for (const auto& t : sentence) alone.push_back(Var(t));
    Graph g;
    const auto reference = run_bidirectional(g, alone, fwd, bwd, std::vector<ad::RowMask>(3, ad::RowMask{1}));

    // Row 1 of a two-row batch, padded to length 5 with junk.
    std::vector<Var> padded;
    std::vector<ad::RowMask> live;
    for (std::size_t t = 0; t < 5; ++t) {
      Tensor rows = random_rows(2, 3, rng);
      if (t < 3)
        for (std::size_t j = 0; j < 3; ++j) rows.at(1, j) = sentence[t][j];
      padded.push_back(Var(rows));
      live.push_back(ad::RowMask{1, static_cast<std::uint8_t>(t < 3)});
    }
    const auto out = run_bidirectional(g, padded, fwd, bwd, live);
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t j = 0; j < 8; ++j) {
        if (t < 3) CHECK(out[t].value().at(1, j) == reference[t].value()[j]);
        else CHECK(out[t].value().at(1, j) == 0.0);
      }
  }
}
