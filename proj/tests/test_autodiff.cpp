// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "gcdt/autodiff.hpp"
#include "gcdt/errors.hpp"

using namespace gcdt;
using ad::Graph;
using ad::Var;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (auto& x : t.data()) x = rng.uniform(-1.5, 1.5);
  return t;
}

Var weighted_sum(Graph& g, const Var& y, const Tensor& w) { return g.sum(g.mul_const(y, w)); }

}  // namespace

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  const Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tensor::row({1, 2, 3}).rows() == 1);
}

TEST_CASE("rng is reproducible and state round-trips") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  Rng c(7);
  c.next();
  const std::string saved = c.state();
  const double expect = c.uniform();
  Rng d(0);
  d.set_state(saved);
  CHECK(d.uniform() == expect);
  Rng e(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = e.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("forward examples") {
  Graph g;
  CHECK(g.sigmoid(Var(Tensor::row({0.0}))).value()[0] == 0.5);
  for (double c : {-3.0, 0.0, 7.5}) {
    const Var s = g.softmax(Var(Tensor::row({c, c, c})));
    for (double p : s.value().data()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  const Var m = g.matmul(Var(Tensor::matrix(2, 3, 1.0)), Var(Tensor::matrix(3, 1, 1.0)));
  CHECK(m.shape() == Shape{2, 1});
  CHECK(m.value()[0] == 3.0);
  CHECK(m.value()[1] == 3.0);
}

TEST_CASE("shape mismatches name the operation and both shapes") {
  Graph g;
  const Var a(Tensor::matrix(2, 3)), b(Tensor::matrix(2, 3));
  try {
    g.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("matmul") != std::string::npos);
    CHECK(what.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, Var(Tensor::matrix(3, 2))), ShapeError);
  CHECK_THROWS_AS(g.add_bias(a, Var(Tensor::matrix(2, 3))), ShapeError);
  const std::vector<int> bad{5};
  CHECK_THROWS_AS(g.gather(a, bad), ShapeError);
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(5);
  Graph g;
  for (int trial = 0; trial < 50; ++trial) {
    const Var s = g.softmax(Var(random_matrix(1 + rng.below(5), 1 + rng.below(8), rng)));
    for (std::size_t r = 0; r < s.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < s.cols(); ++c) {
        CHECK(s.value().at(r, c) >= 0.0);
        total += s.value().at(r, c);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("backward examples") {
  SUBCASE("sum gives ones") {
    Var x(Tensor::matrix(3, 4, 2.0), true);
    Graph g;
    g.backward(g.sum(x));
    const Tensor grad = x.grad();
    for (double v : grad.data()) CHECK(v == 1.0);
  }
  SUBCASE("sigmoid of w*x at w=0, x=1") {
    Var w(Tensor::matrix(1, 1, 0.0), true);
    const Var x(Tensor::matrix(1, 1, 1.0));
    Graph g;
    g.backward(g.sigmoid(g.matmul(w, x)));
    CHECK(w.grad()[0] == 0.25);
  }
  SUBCASE("non-scalar loss fails") {
    Var x(Tensor::matrix(2, 2), true);
    Graph g;
    CHECK_THROWS_AS(g.backward(g.tanh(x)), ShapeError);
  }
  SUBCASE("replaying twice fails") {
    Var x(Tensor::matrix(1, 1), true);
    Graph g;
    const Var y = g.sum(x);
    g.backward(y);
    CHECK_THROWS_AS(g.backward(y), std::logic_error);
  }
}

TEST_CASE("gradients accumulate across fan-out") {
  Rng rng(11);
  const Tensor point = random_matrix(2, 3, rng);
  Var shared(point, true);
  {
    Graph g;
    g.backward(g.sum(g.add(g.mul(shared, shared), g.tanh(shared))));
  }
  Var a(point, true), b(point, true), c(point, true);
  {
    Graph g;
    g.backward(g.sum(g.add(g.mul(a, b), g.tanh(c))));
  }
  for (std::size_t i = 0; i < point.size(); ++i) {
    CHECK(shared.grad()[i] == doctest::Approx(a.grad()[i] + b.grad()[i] + c.grad()[i]).epsilon(1e-14));
  }
}

TEST_CASE("composite matches finite differences") {
  Rng rng(3);
  const Tensor w = random_matrix(3, 2, rng);
  const auto r = ad::finite_diff_check(
      [&](Graph& g, const Var& x) { return g.sum(g.mul(g.tanh(g.matmul(x, Var(w))), g.sigmoid(g.matmul(x, Var(w))))); },
      random_matrix(2, 3, rng));
  CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("finite_diff_check examples") {
  const auto identity = ad::finite_diff_check([](Graph& g, const Var& x) { return g.sum(x); }, Tensor::matrix(2, 2, 0.3));
  CHECK(identity.max_rel_error <= 1e-9);
  const auto tanh0 = ad::finite_diff_check([](Graph& g, const Var& x) { return g.sum(g.tanh(x)); }, Tensor::matrix(1, 1));
  CHECK(tanh0.max_rel_error <= 1e-9);
  CHECK_THROWS_AS(ad::finite_diff_check([](Graph& g, const Var& x) { return g.sum(g.affine(x, 1.0 / 0.0, 0.0)); },
                                        Tensor::matrix(1, 1, 1.0)),
                  NumericError);
}

TEST_CASE("every differentiable op passes 100 random finite-difference checks") {
  using Fn = std::function<Var(Graph&, const Var&, Rng&)>;
  // Each builder draws its constants from rng before the check so the
  // function is deterministic in x.
  struct OpCase {
    const char* name;
    std::function<Fn(std::size_t, std::size_t, Rng&)> make;
  };
  const std::vector<OpCase> cases = {
      {"matmul", [](std::size_t r, std::size_t c, Rng& rng) -> Fn {
         const Tensor w = random_matrix(c, 1 + rng.below(8), rng);
         return [w](Graph& g, const Var& x, Rng&) { return g.matmul(x, Var(w)); };
       }},
      {"add_sub_mul", [](std::size_t r, std::size_t c, Rng& rng) -> Fn {
         const Tensor k = random_matrix(r, c, rng);
         return [k](Graph& g, const Var& x, Rng&) { return g.mul(g.sub(x, Var(k)), g.add(x, Var(k))); };
       }},
      {"add_bias", [](std::size_t r, std::size_t c, Rng& rng) -> Fn {
         const Tensor k = random_matrix(r, c, rng);
         return [k](Graph& g, const Var& x, Rng&) { return g.add_bias(Var(k), g.slice_rows(x, 0, 1)); };
       }},
      {"affine", [](std::size_t, std::size_t, Rng&) -> Fn {
         return [](Graph& g, const Var& x, Rng&) { return g.affine(x, -2.5, 0.75); };
       }},
      {"sigmoid", [](std::size_t, std::size_t, Rng&) -> Fn {
         return [](Graph& g, const Var& x, Rng&) { return g.sigmoid(x); };
       }},
      {"tanh", [](std::size_t, std::size_t, Rng&) -> Fn {
         return [](Graph& g, const Var& x, Rng&) { return g.tanh(x); };
       }},
      {"concat_slice", [](std::size_t, std::size_t c, Rng& rng) -> Fn {
         const std::size_t cut = rng.below(c);
         return [cut, c](Graph& g, const Var& x, Rng&) {
           return g.concat({g.slice_cols(x, cut, c), g.tanh(x), g.slice_cols(x, 0, cut + 1)});
         };
       }},
      {"mean", [](std::size_t, std::size_t, Rng& rng) -> Fn {
         const int axis = static_cast<int>(rng.below(2));
         return [axis](Graph& g, const Var& x, Rng&) { return g.mean(x, axis); };
       }},
      {"max", [](std::size_t, std::size_t, Rng& rng) -> Fn {
         const int axis = static_cast<int>(rng.below(2));
         return [axis](Graph& g, const Var& x, Rng&) { return g.max(x, axis); };
       }},
      {"gather", [](std::size_t r, std::size_t, Rng& rng) -> Fn {
         std::vector<int> ids(1 + rng.below(8));
         for (auto& i : ids) i = static_cast<int>(rng.below(r));
         return [ids](Graph& g, const Var& x, Rng&) { return g.gather(x, ids); };
       }},
      {"softmax", [](std::size_t, std::size_t, Rng&) -> Fn {
         return [](Graph& g, const Var& x, Rng&) { return g.softmax(x); };
       }},
      {"softmax_xent", [](std::size_t r, std::size_t c, Rng& rng) -> Fn {
         std::vector<int> targets(r);
         std::vector<double> weights(r);
         for (std::size_t i = 0; i < r; ++i) {
           targets[i] = static_cast<int>(rng.below(c));
           weights[i] = rng.below(4) == 0 ? 0.0 : rng.uniform(0.5, 2.0);
         }
         return [targets, weights](Graph& g, const Var& x, Rng&) {
           return g.softmax_cross_entropy(x, targets, weights);
         };
       }},
      {"where_rows", [](std::size_t r, std::size_t c, Rng& rng) -> Fn {
         ad::RowMask live(r);
         for (auto& l : live) l = static_cast<std::uint8_t>(rng.below(2));
         const Tensor k = random_matrix(r, c, rng);
         return [live, k](Graph& g, const Var& x, Rng&) { return g.where_rows(live, g.tanh(x), g.mul(x, Var(k))); };
       }},
      {"pool_steps", [](std::size_t r, std::size_t c, Rng& rng) -> Fn {
         const std::size_t steps = 1 + rng.below(4);
         std::vector<ad::RowMask> live(steps, ad::RowMask(r));
         for (auto& m : live)
           for (auto& l : m) l = static_cast<std::uint8_t>(rng.below(3) != 0);
         std::vector<Tensor> scales;
         for (std::size_t s = 0; s < steps; ++s) scales.push_back(random_matrix(r, c, rng));
         const auto mode = rng.below(2) == 0 ? ad::Pool::kMean : ad::Pool::kMax;
         return [live, scales, mode](Graph& g, const Var& x, Rng&) {
           std::vector<Var> parts;
           for (const auto& s : scales) parts.push_back(g.mul_const(x, s));
           return g.pool_steps(parts, live, mode);
         };
       }},
  };
  for (const auto& op : cases) {
    CAPTURE(op.name);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
      const Fn f = op.make(r, c, rng);
      const Tensor point = random_matrix(r, c, rng);
      Rng unused(0);
      const Var probe = [&] {
        Graph g(false);
        return f(g, Var(point), unused);
      }();
      Tensor w(probe.shape());
      for (auto& v : w.data()) v = rng.uniform(-1.5, 1.5);
      const auto res = ad::finite_diff_check(
          [&](Graph& g, const Var& x) { return weighted_sum(g, f(g, x, unused), w); }, point);
      worst = std::max(worst, res.max_rel_error);
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("dropout: inverted scaling in training, identity in evaluation") {
  Rng rng(9);
  const Var x(Tensor::matrix(200, 50, 1.0));
  Graph g;
  const Var eval = g.dropout(x, 0.7, rng, false);
  CHECK(eval.node() == x.node());
  const Var train = g.dropout(x, 0.7, rng, true);
  std::size_t kept = 0;
  for (double v : train.value().data()) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-15));
      ++kept;
    }
  }
  const double rate = static_cast<double>(kept) / 10000.0;
  CHECK(rate == doctest::Approx(0.7).epsilon(0.03));
}

TEST_CASE("frozen tables receive gradients only when marked trainable") {
  Var table(Tensor::matrix(4, 2, 1.0), false);
  Var other(Tensor::matrix(1, 2, 1.0), true);
  const std::vector<int> ids{1, 1, 3};
  Graph g;
  g.backward(g.sum(g.add_bias(g.gather(table, ids), other)));
  CHECK_FALSE(table.has_grad());
  CHECK(other.grad()[0] == 3.0);

  Var trainable(Tensor::matrix(4, 2, 1.0), true);
  Graph h;
  h.backward(h.sum(h.gather(trainable, ids)));
  CHECK(trainable.grad().at(1, 0) == 2.0);
  CHECK(trainable.grad().at(3, 1) == 1.0);
  CHECK(trainable.grad().at(0, 0) == 0.0);
}

TEST_CASE("where_rows is exact row selection") {
  const Var a(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3, 4}));
  const Var b(Tensor(Shape{2, 2}, std::vector<double>{5, 6, 7, 8}));
  Graph g;
  const Var y = g.where_rows(ad::RowMask{0, 1}, a, b);
  CHECK(y.value().data() == std::vector<double>{5, 6, 3, 4});
}

TEST_CASE("corrupted backward rule is caught by the checker") {
  Rng rng(2);
  const Tensor point = random_matrix(2, 3, rng);
  auto f = [](Graph& g, const Var& x) { return g.sum(g.tanh(x)); };
  ad::set_corrupted_op(ad::Op::kTanh);
  const auto broken = ad::finite_diff_check(f, point);
  ad::set_corrupted_op(std::nullopt);
  CHECK(broken.max_rel_error > 1e-2);
  CHECK(ad::finite_diff_check(f, point).max_rel_error <= 1e-8);
  for (int i = 0; i <= static_cast<int>(ad::Op::kPoolSteps); ++i) {
    const auto op = static_cast<ad::Op>(i);
    CHECK(ad::op_from_name(ad::op_name(op)) == op);
  }
}

TEST_CASE("determinism: identical seeds give identical forward values") {
  auto run = [] {
    Rng rng(77);
    const Tensor x = random_matrix(3, 4, rng), w = random_matrix(4, 5, rng);
    Graph g;
    return g.softmax(g.dropout(g.tanh(g.matmul(Var(x), Var(w))), 0.5, rng, true)).value();
  };
  CHECK(run() == run());
}
