// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcdt/tensor.hpp"

namespace gcdt::ad {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
};

// Shared handle to a node. Parameters outlive graphs; intermediates are
// kept alive by the graph that produced them.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t size() const { return node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient, or zeros of the value's shape when nothing has flowed in.
  Tensor grad() const;
  Tensor& grad_storage() { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

enum class Op : int {
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kAddBias,
  kMulConst,
  kAffine,
  kSigmoid,
  kTanh,
  kConcat,
  kSliceCols,
  kSliceRows,
  kMean,
  kMax,
  kGather,
  kSoftmax,
  kSoftmaxXent,
  kSum,
  kWhereRows,
  kPoolSteps,
};

const char* op_name(Op op);
std::optional<Op> op_from_name(const std::string& name);

// Test hook: when set, the named operation's backward rule receives a
// scaled upstream gradient. Used to prove the gradient checks can fail.
void set_corrupted_op(std::optional<Op> op);
std::optional<Op> corrupted_op();

enum class Pool { kMean, kMax };

// Row mask over a batch: 1 marks a live row.
using RowMask = std::vector<std::uint8_t>;

// Ordered record of executed operations. Operations whose inputs need
// gradients are appended with a backward rule; backward() replays the
// record once in reverse.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return tape_.size(); }

  static Var constant(Tensor value) { return Var(std::move(value), false); }

  Var matmul(const Var& a, const Var& b);
  Var add(const Var& a, const Var& b);
  Var sub(const Var& a, const Var& b);
  Var mul(const Var& a, const Var& b);
  // Matrix plus a 1 x n row broadcast over rows; the only broadcast allowed.
  Var add_bias(const Var& a, const Var& bias);
  Var mul_const(const Var& a, const Tensor& factor);
  // scale * a + shift, elementwise.
  Var affine(const Var& a, double scale, double shift);
  Var one_minus(const Var& a) { return affine(a, -1.0, 1.0); }
  Var sigmoid(const Var& a);
  Var tanh(const Var& a);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }
  Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
  Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
  // Reduce a matrix over axis 0 (-> 1 x n) or axis 1 (-> m x 1).
  Var mean(const Var& a, int axis);
  Var max(const Var& a, int axis);
  Var gather(const Var& table, std::span<const int> rows);
  // Inverted dropout; identity (same node) when not training or keep == 1.
  Var dropout(const Var& a, double keep_prob, Rng& rng, bool training);
  Var softmax(const Var& a);
  // Sum over rows of weight[i] * cross-entropy(softmax(logits[i]), target[i]).
  // Rows with zero weight are skipped entirely.
  Var softmax_cross_entropy(const Var& logits, std::span<const int> targets,
                            std::span<const double> weights);
  Var sum(const Var& a);
  // Row i taken from a where live[i], else from b.
  Var where_rows(const RowMask& live, const Var& a, const Var& b);
  // Pool equally-shaped step matrices into one; row r pools only the steps
  // whose mask marks r live. Rows with no live step come out zero.
  Var pool_steps(std::span<const Var> steps, std::span<const RowMask> live, Pool mode);

  void backward(const Var& loss);

 private:
  struct Record {
    Op op;
    Var output;
    std::function<void(const Tensor& out_grad)> backward;
  };

  bool wants_grad(std::initializer_list<const Var*> inputs) const;
  Var emit(Op op, Tensor value, bool needs_grad,
           std::function<void(const Tensor& out_grad)> backward);

  bool record_;
  bool consumed_ = false;
  std::vector<Record> tape_;
};

// Inverted-dropout keep mask: entries are 0 or 1/keep_prob.
Tensor dropout_mask(const Shape& shape, double keep_prob, Rng& rng);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t worst_param = 0;  // position in the checked list
  std::size_t coordinates = 0;  // how many were compared
};

// Compares d f / d point from backward() against central differences.
// f builds a scalar on the supplied graph from the supplied variable.
// Error per coordinate: |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult finite_diff_check(const std::function<Var(Graph&, const Var&)>& f,
                                  const Tensor& point, double epsilon = 1e-5);

// Same, perturbing an existing parameter in place (restored afterwards).
GradCheckResult finite_diff_check_param(const std::function<Var(Graph&)>& f, Var& param,
                                        double epsilon = 1e-5);

// One backward pass for all params, then central differences on each. With
// max_coords > 0, tensors larger than that are sampled (without
// replacement) using rng.
GradCheckResult finite_diff_check_params(const std::function<Var(Graph&)>& f,
                                         std::span<Var> params, double epsilon = 1e-5,
                                         std::size_t max_coords = 0, Rng* rng = nullptr);

}  // namespace gcdt::ad
