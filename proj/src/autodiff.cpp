// SPDX-License-Identifier: Apache-2.0
#include "gcdt/autodiff.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include "gcdt/errors.hpp"

namespace gcdt::ad {

namespace {

constexpr std::array<const char*, 20> kOpNames = {
    "matmul", "add",    "sub",   "mul",    "add_bias", "mul_const", "affine",
    "sigmoid", "tanh",  "concat", "slice_cols", "slice_rows", "mean", "max",
    "gather", "softmax", "softmax_xent", "sum", "where_rows", "pool_steps"};

std::atomic<int> g_corrupted{-1};

Tensor& grad_of(Node* node) {
  if (node->grad.empty()) node->grad = Tensor(node->value.shape(), 0.0);
  return node->grad;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

const char* op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (name == kOpNames[i]) return static_cast<Op>(i);
  }
  return std::nullopt;
}

void set_corrupted_op(std::optional<Op> op) {
  g_corrupted.store(op ? static_cast<int>(*op) : -1);
}

std::optional<Op> corrupted_op() {
  const int v = g_corrupted.load();
  if (v < 0) return std::nullopt;
  return static_cast<Op>(v);
}

bool Graph::wants_grad(std::initializer_list<const Var*> inputs) const {
  if (!record_) return false;
  for (const Var* v : inputs) {
    if (v->requires_grad()) return true;
  }
  return false;
}

Var Graph::emit(Op op, Tensor value, bool needs_grad,
                std::function<void(const Tensor&)> backward) {
  Var out(std::move(value), needs_grad);
  if (needs_grad) tape_.push_back(Record{op, out, std::move(backward)});
  return out;
}

Var Graph::matmul(const Var& a, const Var& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) shape_fail("matmul", a.shape(), b.shape());
  Tensor out = Tensor::matrix(m, n);
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &ov[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return emit(Op::kMatmul, std::move(out), wants_grad({&a, &b}),
              [a, b, m, k, n](const Tensor& g) {
                const auto& gv = g.data();
                if (a.requires_grad()) {
                  auto& ga = grad_of(a.node()).data();
                  const auto& bv = b.value().data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j) acc += gv[i * n + j] * bv[p * n + j];
                      ga[i * k + p] += acc;
                    }
                }
                if (b.requires_grad()) {
                  auto& gb = grad_of(b.node()).data();
                  const auto& av = a.value().data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double x = av[i * k + p];
                      if (x == 0.0) continue;
                      for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * gv[i * n + j];
                    }
                }
              });
}

Var Graph::add(const Var& a, const Var& b) {
  require_same("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return emit(Op::kAdd, std::move(out), wants_grad({&a, &b}), [a, b](const Tensor& g) {
    for (const Var* v : {&a, &b}) {
      if (!v->requires_grad()) continue;
      auto& gv = grad_of(v->node());
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var Graph::sub(const Var& a, const Var& b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return emit(Op::kSub, std::move(out), wants_grad({&a, &b}), [a, b](const Tensor& g) {
    if (a.requires_grad()) {
      auto& ga = grad_of(a.node());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto& gb = grad_of(b.node());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Graph::mul(const Var& a, const Var& b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return emit(Op::kMul, std::move(out), wants_grad({&a, &b}), [a, b](const Tensor& g) {
    if (a.requires_grad()) {
      auto& ga = grad_of(a.node());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      auto& gb = grad_of(b.node());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var Graph::add_bias(const Var& a, const Var& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n || bias.rows() != 1) shape_fail("add_bias", a.shape(), bias.shape());
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.value()[j];
  return emit(Op::kAddBias, std::move(out), wants_grad({&a, &bias}),
              [a, bias, m, n](const Tensor& g) {
                if (a.requires_grad()) {
                  auto& ga = grad_of(a.node());
                  for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (bias.requires_grad()) {
                  auto& gb = grad_of(bias.node());
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                }
              });
}

Var Graph::mul_const(const Var& a, const Tensor& factor) {
  if (a.shape() != factor.shape()) shape_fail("mul_const", a.shape(), factor.shape());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
  return emit(Op::kMulConst, std::move(out), wants_grad({&a}), [a, factor](const Tensor& g) {
    auto& ga = grad_of(a.node());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor[i];
  });
}

Var Graph::affine(const Var& a, double scale, double shift) {
  Tensor out = a.value();
  for (auto& x : out.data()) x = scale * x + shift;
  return emit(Op::kAffine, std::move(out), wants_grad({&a}), [a, scale](const Tensor& g) {
    auto& ga = grad_of(a.node());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
  });
}

Var Graph::sigmoid(const Var& a) {
  Tensor out = a.value();
  for (auto& x : out.data()) x = sigmoid_scalar(x);
  Var result = emit(Op::kSigmoid, std::move(out), wants_grad({&a}), nullptr);
  if (result.requires_grad()) {
    Node* y = result.node();
    tape_.back().backward = [a, y](const Tensor& g) {
      auto& ga = grad_of(a.node());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = y->value[i];
        ga[i] += g[i] * s * (1.0 - s);
      }
    };
  }
  return result;
}

Var Graph::tanh(const Var& a) {
  Tensor out = a.value();
  for (auto& x : out.data()) x = std::tanh(x);
  Var result = emit(Op::kTanh, std::move(out), wants_grad({&a}), nullptr);
  if (result.requires_grad()) {
    Node* y = result.node();
    tape_.back().backward = [a, y](const Tensor& g) {
      auto& ga = grad_of(a.node());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = y->value[i];
        ga[i] += g[i] * (1.0 - t * t);
      }
    };
  }
  return result;
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_fail("concat", parts[0].shape(), p.shape());
    n += p.cols();
    needs = needs || (record_ && p.requires_grad());
  }
  Tensor out = Tensor::matrix(m, n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&p.value().data()[i * pc], pc, &out.data()[i * n + offset]);
    offset += pc;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return emit(Op::kConcat, std::move(out), needs, [inputs, m, n](const Tensor& g) {
    std::size_t offset = 0;
    for (const auto& p : inputs) {
      const std::size_t pc = p.cols();
      if (p.requires_grad()) {
        auto& gp = grad_of(p.node());
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * n + offset + j];
      }
      offset += pc;
    }
  });
}

Var Graph::slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out = Tensor::matrix(m, w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(&a.value().data()[i * n + begin], w, &out.data()[i * w]);
  return emit(Op::kSliceCols, std::move(out), wants_grad({&a}),
              [a, m, n, w, begin](const Tensor& g) {
                auto& ga = grad_of(a.node());
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
              });
}

Var Graph::slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > m) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + shape_str(a.shape()));
  }
  Tensor out = Tensor::matrix(end - begin, n);
  std::copy_n(&a.value().data()[begin * n], (end - begin) * n, out.data().begin());
  return emit(Op::kSliceRows, std::move(out), wants_grad({&a}), [a, n, begin](const Tensor& g) {
    auto& ga = grad_of(a.node());
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var Graph::mean(const Var& a, int axis) {
  const std::size_t m = a.rows(), n = a.cols();
  if (axis != 0 && axis != 1) throw ShapeError("mean: axis must be 0 or 1");
  Tensor out = axis == 0 ? Tensor::matrix(1, n) : Tensor::matrix(m, 1);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += a.value()[i * n + j];
  const double denom = axis == 0 ? static_cast<double>(m) : static_cast<double>(n);
  for (auto& x : out.data()) x /= denom;
  return emit(Op::kMean, std::move(out), wants_grad({&a}),
              [a, m, n, axis, denom](const Tensor& g) {
                auto& ga = grad_of(a.node());
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[axis == 0 ? j : i] / denom;
              });
}

Var Graph::max(const Var& a, int axis) {
  const std::size_t m = a.rows(), n = a.cols();
  if (axis != 0 && axis != 1) throw ShapeError("max: axis must be 0 or 1");
  const std::size_t outer = axis == 0 ? n : m, inner = axis == 0 ? m : n;
  Tensor out = axis == 0 ? Tensor::matrix(1, n) : Tensor::matrix(m, 1);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = axis == 0 ? o : o * n;
    for (std::size_t q = 1; q < inner; ++q) {
      const std::size_t idx = axis == 0 ? q * n + o : o * n + q;
      if (a.value()[idx] > a.value()[best]) best = idx;
    }
    arg[o] = best;
    out[o] = a.value()[best];
  }
  return emit(Op::kMax, std::move(out), wants_grad({&a}), [a, arg](const Tensor& g) {
    auto& ga = grad_of(a.node());
    for (std::size_t o = 0; o < arg.size(); ++o) ga[arg[o]] += g[o];
  });
}

Var Graph::gather(const Var& table, std::span<const int> rows) {
  const std::size_t v = table.rows(), d = table.cols();
  if (rows.empty()) throw ShapeError("gather: empty index list");
  Tensor out = Tensor::matrix(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= v) {
      throw ShapeError("gather: row " + std::to_string(rows[i]) + " outside table " +
                       shape_str(table.shape()));
    }
    std::copy_n(&table.value().data()[rows[i] * d], d, &out.data()[i * d]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return emit(Op::kGather, std::move(out), wants_grad({&table}), [table, idx, d](const Tensor& g) {
    auto& gt = grad_of(table.node());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
  });
}

Tensor dropout_mask(const Shape& shape, double keep_prob, Rng& rng) {
  Tensor mask(shape, 0.0);
  const double scale = 1.0 / keep_prob;
  for (auto& x : mask.data()) x = rng.uniform() < keep_prob ? scale : 0.0;
  return mask;
}

Var Graph::dropout(const Var& a, double keep_prob, Rng& rng, bool training) {
  if (keep_prob <= 0.0 || keep_prob > 1.0) throw ShapeError("dropout: keep probability out of (0, 1]");
  if (!training || keep_prob == 1.0) return a;
  return mul_const(a, dropout_mask(a.shape(), keep_prob, rng));
}

Var Graph::softmax(const Var& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) row[j] /= total;
  }
  Var result = emit(Op::kSoftmax, std::move(out), wants_grad({&a}), nullptr);
  if (result.requires_grad()) {
    Node* y = result.node();
    tape_.back().backward = [a, y, m, n](const Tensor& g) {
      auto& ga = grad_of(a.node());
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          ga[i * n + j] += y->value[i * n + j] * (g[i * n + j] - dot);
      }
    };
  }
  return result;
}

Var Graph::softmax_cross_entropy(const Var& logits, std::span<const int> targets,
                                 std::span<const double> weights) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m || weights.size() != m) {
    throw ShapeError("softmax_xent: " + std::to_string(targets.size()) + " targets and " +
                     std::to_string(weights.size()) + " weights for logits " +
                     shape_str(logits.shape()));
  }
  Tensor probs = Tensor::matrix(m, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (weights[i] == 0.0) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw ShapeError("softmax_xent: target " + std::to_string(targets[i]) + " outside " +
                       std::to_string(n) + " classes");
    }
    const double* row = &logits.value().data()[i * n];
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (probs[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= total;
    loss += weights[i] * (mx + std::log(total) - row[targets[i]]);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return emit(Op::kSoftmaxXent, Tensor::scalar(loss), wants_grad({&logits}),
              [logits, probs = std::move(probs), tgt, w, m, n](const Tensor& g) {
                auto& gl = grad_of(logits.node());
                for (std::size_t i = 0; i < m; ++i) {
                  if (w[i] == 0.0) continue;
                  const double s = g[0] * w[i];
                  for (std::size_t j = 0; j < n; ++j) {
                    const double onehot = static_cast<int>(j) == tgt[i] ? 1.0 : 0.0;
                    gl[i * n + j] += s * (probs[i * n + j] - onehot);
                  }
                }
              });
}

Var Graph::sum(const Var& a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return emit(Op::kSum, Tensor::scalar(total), wants_grad({&a}), [a](const Tensor& g) {
    auto& ga = grad_of(a.node());
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
  });
}

Var Graph::where_rows(const RowMask& live, const Var& a, const Var& b) {
  require_same("where_rows", a, b);
  const std::size_t m = a.rows(), n = a.cols();
  if (live.size() != m) {
    throw ShapeError("where_rows: mask of " + std::to_string(live.size()) + " rows for " +
                     shape_str(a.shape()));
  }
  Tensor out = b.value();
  for (std::size_t i = 0; i < m; ++i)
    if (live[i]) std::copy_n(&a.value().data()[i * n], n, &out.data()[i * n]);
  return emit(Op::kWhereRows, std::move(out), wants_grad({&a, &b}),
              [live, a, b, n](const Tensor& g) {
                for (std::size_t i = 0; i < live.size(); ++i) {
                  const Var& src = live[i] ? a : b;
                  if (!src.requires_grad()) continue;
                  auto& gs = grad_of(src.node());
                  for (std::size_t j = 0; j < n; ++j) gs[i * n + j] += g[i * n + j];
                }
              });
}

Var Graph::pool_steps(std::span<const Var> steps, std::span<const RowMask> live, Pool mode) {
  if (steps.empty()) throw ShapeError("pool_steps: no steps");
  if (live.size() != steps.size()) throw ShapeError("pool_steps: one mask per step required");
  const std::size_t m = steps[0].rows(), n = steps[0].cols();
  bool needs = false;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    if (steps[s].shape() != steps[0].shape()) shape_fail("pool_steps", steps[0].shape(), steps[s].shape());
    if (live[s].size() != m) throw ShapeError("pool_steps: mask size differs from row count");
    needs = needs || (record_ && steps[s].requires_grad());
  }
  Tensor out = Tensor::matrix(m, n);
  std::vector<double> count(m, 0.0);
  // For max: index of the winning step per element.
  std::vector<int> arg(mode == Pool::kMax ? m * n : 0, -1);
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto& v = steps[s].value().data();
    for (std::size_t i = 0; i < m; ++i) {
      if (!live[s][i]) continue;
      count[i] += 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = i * n + j;
        if (mode == Pool::kMean) {
          out[k] += v[k];
        } else if (arg[k] < 0 || v[k] > out[k]) {
          out[k] = v[k];
          arg[k] = static_cast<int>(s);
        }
      }
    }
  }
  if (mode == Pool::kMean) {
    for (std::size_t i = 0; i < m; ++i)
      if (count[i] > 0)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= count[i];
  }
  std::vector<Var> inputs(steps.begin(), steps.end());
  std::vector<RowMask> masks(live.begin(), live.end());
  return emit(Op::kPoolSteps, std::move(out), needs,
              [inputs, masks, count, arg, mode, m, n](const Tensor& g) {
                for (std::size_t s = 0; s < inputs.size(); ++s) {
                  if (!inputs[s].requires_grad()) continue;
                  auto& gs = grad_of(inputs[s].node());
                  for (std::size_t i = 0; i < m; ++i) {
                    if (!masks[s][i]) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                      const std::size_t k = i * n + j;
                      if (mode == Pool::kMean) {
                        gs[k] += g[k] / count[i];
                      } else if (arg[k] == static_cast<int>(s)) {
                        gs[k] += g[k];
                      }
                    }
                  }
                }
              });
}

void Graph::backward(const Var& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (consumed_) throw std::logic_error("backward: graph already replayed");
  consumed_ = true;
  if (!loss.requires_grad()) return;
  grad_of(loss.node())[0] += 1.0;
  const auto corrupted = corrupted_op();
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node* out = it->output.node();
    if (out->grad.empty()) continue;
    if (corrupted && *corrupted == it->op) {
      Tensor skewed = out->grad;
      for (auto& x : skewed.data()) x *= 1.5;
      it->backward(skewed);
    } else {
      it->backward(out->grad);
    }
  }
}

namespace {

double scalar_value(const Var& v, const char* what) {
  if (v.size() != 1) throw ShapeError(std::string(what) + ": function must return a scalar");
  return v.value()[0];
}

GradCheckResult compare(const Tensor& analytic, const std::function<double(std::size_t, double)>& eval,
                        const Tensor& point, double epsilon, std::span<const std::size_t> coords = {}) {
  if (!(epsilon > 0)) throw std::invalid_argument("finite_diff_check: epsilon must be positive");
  GradCheckResult result;
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(point.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }
  result.coordinates = coords.size();
  for (std::size_t i : coords) {
    const double plus = eval(i, point[i] + epsilon);
    const double minus = eval(i, point[i] - epsilon);
    const double numeric = (plus - minus) / (2 * epsilon);
    const double a = analytic[i];
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      throw NumericError("finite_diff_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace

GradCheckResult finite_diff_check(const std::function<Var(Graph&, const Var&)>& f,
                                  const Tensor& point, double epsilon) {
  Var x(point, true);
  {
    Graph g;
    Var y = f(g, x);
    scalar_value(y, "finite_diff_check");
    g.backward(y);
  }
  const Tensor analytic = x.grad();
  auto eval = [&](std::size_t i, double value) {
    Tensor p = point;
    p[i] = value;
    Graph g(false);
    return scalar_value(f(g, Graph::constant(p)), "finite_diff_check");
  };
  return compare(analytic, eval, point, epsilon);
}

GradCheckResult finite_diff_check_param(const std::function<Var(Graph&)>& f, Var& param,
                                        double epsilon) {
  const bool was = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  {
    Graph g;
    Var y = f(g);
    scalar_value(y, "finite_diff_check");
    g.backward(y);
  }
  const Tensor analytic = param.grad();
  param.zero_grad();
  const Tensor point = param.value();
  auto eval = [&](std::size_t i, double value) {
    param.mutable_value()[i] = value;
    Graph g(false);
    const double out = scalar_value(f(g), "finite_diff_check");
    param.mutable_value()[i] = point[i];
    return out;
  };
  GradCheckResult r = compare(analytic, eval, point, epsilon);
  param.set_requires_grad(was);
  return r;
}

GradCheckResult finite_diff_check_params(const std::function<Var(Graph&)>& f,
                                         std::span<Var> params, double epsilon,
                                         std::size_t max_coords, Rng* rng) {
  std::vector<bool> was;
  for (auto& p : params) {
    was.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Graph g;
    Var y = f(g);
    scalar_value(y, "finite_diff_check");
    g.backward(y);
  }
  GradCheckResult total;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Var& param = params[k];
    const Tensor analytic = param.grad();
    const Tensor point = param.value();
    std::vector<std::size_t> coords;
    if (max_coords > 0 && point.size() > max_coords) {
      if (rng == nullptr) throw std::invalid_argument("finite_diff_check_params: sampling needs an rng");
      coords.resize(point.size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      rng->shuffle(coords);
      coords.resize(max_coords);
      std::sort(coords.begin(), coords.end());
    }
    auto eval = [&](std::size_t i, double value) {
      param.mutable_value()[i] = value;
      Graph g(false);
      const double out = scalar_value(f(g), "finite_diff_check");
      param.mutable_value()[i] = point[i];
      return out;
    };
    const GradCheckResult r = compare(analytic, eval, point, epsilon, coords);
    total.coordinates += r.coordinates;
    if (r.max_rel_error > total.max_rel_error) {
      total.max_rel_error = r.max_rel_error;
      total.worst_index = r.worst_index;
      total.worst_param = k;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].zero_grad();
    params[k].set_requires_grad(was[k]);
  }
  return total;
}

}  // namespace gcdt::ad
