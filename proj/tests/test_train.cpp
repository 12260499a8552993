// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gcdt/checkpoint.hpp"
#include "gcdt/errors.hpp"
#include "support.hpp"

using namespace gcdt;
using namespace gcdt::testing;

namespace {

Dataset toy_data(std::uint64_t seed = 31, std::size_t sentences = 16) {
  Rng rng(seed);
  SyntheticSpec spec;
  spec.sentences = sentences;
  spec.vocab = 24;
  spec.types = 2;
  spec.max_len = 8;
  auto corpus = synthetic_corpus(spec, rng);
  auto dev = corpus;
  return make_dataset(std::move(corpus), std::move(dev));
}

RunConfig toy_run(std::size_t epochs, std::size_t patience) {
  RunConfig rc;
  rc.model = tiny_config(6);
  rc.model.beam_size = 2;
  rc.train.max_epochs = epochs;
  rc.train.patience = patience;
  rc.train.token_budget = 40;
  rc.train.initial_lr = 0.02;
  return rc;
}

std::uint64_t tensor_hash(const Tensor& t) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double)));
}

}  // namespace

TEST_CASE("initialization") {
  CHECK(glorot_bound(4, 4) == doctest::Approx(0.8660254037844386).epsilon(1e-15));
  Rng rng(1);
  const Tensor w = glorot_uniform(4, 4, rng);
  for (double x : w.data()) CHECK(std::abs(x) <= std::sqrt(6.0 / 8.0));

  const Dataset data = toy_data();
  auto build = [&](std::uint64_t seed) {
    Rng r(seed);
    return Model(tiny_config(), data.vocabs.words.size(), data.vocabs.chars.size(), data.vocabs.labels.size(), r);
  };
  const Model a = build(5), b = build(5), c = build(6);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().entries().size(); ++i) {
    const auto& ea = a.params().entries()[i];
    CHECK(ea.var.value() == b.params().entries()[i].var.value());
    any_diff |= ea.var.value() != c.params().entries()[i].var.value();
    const std::string leaf = ea.name.substr(ea.name.rfind('.') + 1);
    if (leaf.starts_with("b_") || leaf == "b" || leaf == "bias") {
      CAPTURE(ea.name);
      for (double x : ea.var.value().data()) CHECK(x == 0.0);
    } else if (ea.trainable) {
      CAPTURE(ea.name);
      const double bound = glorot_bound(ea.var.rows(), ea.var.cols());
      for (double x : ea.var.value().data()) CHECK(std::abs(x) <= bound);
    }
  }
  CHECK(any_diff);
}

TEST_CASE("gradient clipping") {
  SUBCASE("below the threshold") {
    std::vector<Tensor> g{Tensor::row({1.2, 1.6})};
    CHECK(clip_gradients(std::span<Tensor>(g), 5.0) == doctest::Approx(2.0));
    CHECK(g[0] == Tensor::row({1.2, 1.6}));
  }
  SUBCASE("on the boundary") {
    std::vector<Tensor> g{Tensor::row({3, 4})};
    clip_gradients(std::span<Tensor>(g), 5.0);
    CHECK(g[0] == Tensor::row({3, 4}));
  }
  SUBCASE("above the threshold") {
    std::vector<Tensor> g{Tensor::row({6, 8})};
    CHECK(clip_gradients(std::span<Tensor>(g), 5.0) == 10.0);
    CHECK(g[0] == Tensor::row({3, 4}));
  }
  SUBCASE("post-clip norm never exceeds the threshold") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Tensor> g{Tensor::matrix(3, 4), Tensor::row({0, 0, 0})};
      const double scale = std::pow(10.0, rng.uniform(-3, 4));
      for (auto& t : g)
        for (auto& x : t.data()) x = scale * rng.uniform(-1, 1);
      clip_gradients(std::span<Tensor>(g), 5.0);
      CHECK(global_norm(g) <= 5.0 + 1e-9);
    }
  }
  SUBCASE("non-finite norm") {
    std::vector<Tensor> g{Tensor::row({1, NAN})};
    CHECK_THROWS_AS(clip_gradients(std::span<Tensor>(g), 5.0), NumericError);
  }
}

TEST_CASE("Adam") {
  ParamStore store;
  ad::Var w = store.add("w", Tensor::row({1.0, -2.0, 0.5}));
  ad::Var frozen = store.add("frozen", Tensor::row({7.0}), false);
  AdamState adam(store);
  auto set_grad = [](ad::Var v, Tensor g) { v.grad_storage() = std::move(g); };

  SUBCASE("zero gradients leave parameters alone") {
    set_grad(w, Tensor::row({0, 0, 0}));
    adam.step(store, 0.1);
    CHECK(w.value() == Tensor::row({1.0, -2.0, 0.5}));
    CHECK(adam.steps() == 1);
    adam.step(store, 0.1);
    CHECK(adam.steps() == 2);
  }
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    set_grad(w, Tensor::row({0.3, -4.0, 1e-3}));
    set_grad(frozen, Tensor::row({100.0}));
    adam.step(store, 0.01);
    CHECK(w.value()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
    CHECK(w.value()[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
    CHECK(w.value()[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-6));
    CHECK(frozen.value()[0] == 7.0);
  }
  SUBCASE("moments follow the hand recursion") {
    const double g = 0.7, b1 = 0.9, b2 = 0.999;
    double m = 0, v = 0;
    for (int t = 1; t <= 3; ++t) {
      set_grad(w, Tensor::row({g, g, g}));
      adam.step(store, 0.001);
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      CHECK(adam.first_moment()[0][0] == doctest::Approx(m).epsilon(1e-15));
      CHECK(adam.second_moment()[0][0] == doctest::Approx(v).epsilon(1e-15));
    }
    CHECK(adam.second_moment()[0][0] == doctest::Approx((1 - b2) * g * g * (1 + b2 + b2 * b2)).epsilon(1e-15));
    CHECK(adam.first_moment().size() == 1);
  }
  SUBCASE("shape drift") {
    ParamStore other;
    other.add("w", Tensor::row({1.0, 2.0}));
    CHECK_THROWS_AS(adam.step(other, 0.1), ShapeError);
  }
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  CHECK(lr_at_step(0, c) == 0.008);
  c.lr_decay_rate = 0.5;
  c.lr_decay_interval = 1000;
  CHECK(lr_at_step(1000, c) == doctest::Approx(0.004).epsilon(1e-15));
  double last = lr_at_step(0, c);
  for (std::size_t s = 1; s < 5000; s += 37) {
    const double lr = lr_at_step(s, c);
    CHECK(lr <= last);
    last = lr;
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.initial_lr = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.token_budget = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("aggregating runs") {
  const std::vector<double> same{91.0, 91.0, 91.0};
  CHECK(aggregate_runs(same) == std::pair{91.0, 0.0});
  const std::vector<double> two{90.0, 92.0};
  const auto [mean, sd] = aggregate_runs(two);
  CHECK(mean == 91.0);
  CHECK(sd == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  std::vector<double> scores{88.1, 91.7, 90.2, 89.9, 92.4};
  const auto base = aggregate_runs(scores);
  std::sort(scores.begin(), scores.end());
  do {
    CHECK(aggregate_runs(scores).first == doctest::Approx(base.first).epsilon(1e-15));
    CHECK(aggregate_runs(scores).second == doctest::Approx(base.second).epsilon(1e-15));
  } while (std::next_permutation(scores.begin(), scores.end()));
  const std::vector<double> one{90.0};
  CHECK_THROWS_AS(aggregate_runs(one), std::invalid_argument);
}

TEST_CASE("training loop") {
  const Dataset data = toy_data();

  SUBCASE("stopping rule follows dev F1 and patience") {
    for (std::size_t patience : {0u, 2u}) {
      CAPTURE(patience);
      RunConfig rc = toy_run(12, patience);
      rc.train.initial_lr = 0.002;
      const SeedRun run = run_seed(rc, data, 4);
      const auto& h = run.result.history;
      REQUIRE_FALSE(h.empty());
      double best = -1, best_acc = -1;
      std::size_t stale = 0, stop = 0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i].dev_f1 > best || (h[i].dev_f1 == best && h[i].dev_accuracy > best_acc)) {
          best = h[i].dev_f1;
          best_acc = h[i].dev_accuracy;
          stale = 0;
        } else {
          ++stale;
        }
        if ((h[i].dev_f1 >= 1.0 && h[i].dev_accuracy >= 1.0) || stale > patience) {
          stop = i + 1;
          break;
        }
      }
      CHECK(h.size() == (stop ? stop : rc.train.max_epochs));
      CHECK(run.result.best_dev_f1 == best);
      CHECK(run.result.best_dev_accuracy == best_acc);
      CHECK(run.dev_report.overall.f1() == doctest::Approx(best).epsilon(1e-12));
      CHECK(run.dev_report.accuracy() == doctest::Approx(best_acc).epsilon(1e-12));
    }
  }
  SUBCASE("same seed, same history") {
    const RunConfig rc = toy_run(3, 10);
    const SeedRun a = run_seed(rc, data, 9), b = run_seed(rc, data, 9), c = run_seed(rc, data, 10);
    CHECK(a.result.history == b.result.history);
    CHECK(serialize(a.checkpoint) == serialize(b.checkpoint));
    CHECK(a.result.history != c.result.history);
  }
  SUBCASE("frozen word table is untouched") {
    const RunConfig rc = toy_run(2, 10);
    Rng init(3);
    Model model(rc.model, data.vocabs.words.size(), data.vocabs.chars.size(), data.vocabs.labels.size(), init);
    const auto* table = model.params().find("word.table");
    REQUIRE(table != nullptr);
    CHECK_FALSE(table->trainable);
    const auto before = tensor_hash(table->var.value());
    const std::size_t trainable_before = model.param_count();
    const Tensor encoder_before = model.params().find("encoder.fwd.lgru.w_xh")->var.value();
    train(model, data.train, data.dev, data.vocabs, rc.train, 3);
    CHECK(tensor_hash(table->var.value()) == before);
    CHECK(model.params().find("encoder.fwd.lgru.w_xh")->var.value() != encoder_before);
    CHECK(model.param_count() == trainable_before);
  }
  SUBCASE("divergence names the step") {
    RunConfig rc = toy_run(3, 10);
    rc.train.initial_lr = 1e300;
    rc.train.clip_norm = 1e300;
    try {
      run_seed(rc, data, 1);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }
  SUBCASE("log lines") {
    const EpochRecord r{2, 17, 0.5, 0.008, 0.25, 0.75};
    CHECK(to_json_line(r) ==
          R"({"epoch": 2, "step": 17, "loss": 0.5, "lr": 0.0080000000000000002, "dev_f1": 0.25, "dev_accuracy": 0.75})");
  }
}
