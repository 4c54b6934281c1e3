#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "meshsmile/param.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile {

class Graph;

// Handle to a node on a Graph's tape. Cheap to copy; only meaningful together
// with the graph that issued it.
struct Var {
  std::size_t idx = static_cast<std::size_t>(-1);
  bool valid() const { return idx != static_cast<std::size_t>(-1); }
};

namespace detail {

struct Node;

// One differentiable operation on the tape. Subclasses capture their input
// node indices and any forward-pass bookkeeping their backward pass needs.
class OpBase {
 public:
  virtual ~OpBase() = default;
  // Accumulate input gradients given this op's output value and the gradient
  // of the loss with respect to that output.
  virtual void backward(Graph& g, const Tensor& out_value, const Tensor& out_grad) = 0;
};

struct Node {
  Tensor value;
  Tensor grad;
  bool touched = false;  // set once any gradient lands here
  std::unique_ptr<OpBase> op;  // null for leaves
  Parameter* param = nullptr;  // set for parameter leaves
};

}  // namespace detail

// Reverse-mode autodiff tape over dense tensors. Build a computation by
// calling op methods, then call backward() on the output node; gradients for
// every contributing node accumulate on the tape and can be read back or
// flushed into Parameters.
class Graph {
 public:
  // Leaf holding externally supplied data. Gradients are tracked so inputs
  // can be differentiated against (saliency) or chained from another graph.
  Var input(Tensor v);
  // Leaf for fixed data; same mechanics as input, named for intent.
  Var constant(Tensor v);
  // Leaf initialised from a parameter's current value and linked to it so
  // add_param_grads() can flush the accumulated gradient back.
  Var param(Parameter& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  // y = x * w^T + b with b broadcast over rows; x [r,d_in], w [d_out,d_in],
  // b [d_out].
  Var linear(Var x, Var w, Var b);
  // Row-wise layer normalisation with learned gain/shift (both [cols]).
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var x, std::vector<std::size_t> rows);
  Var slice_cols(Var x, std::size_t first, std::size_t count);
  Var mean_rows(Var x);
  Var max_rows(Var x);
  // Per-column max within row groups: rows with group_of_row[r] == g reduce
  // into output row g. Every group must own at least one row.
  Var group_max_rows(Var x, std::vector<std::size_t> group_of_row, std::size_t n_groups);
  Var sum_all(Var x);
  Var add_bias_rows(Var x, Var b);
  // Adds b[r] to every element of row r; b rank-1 with one entry per row.
  Var add_bias_cols(Var x, Var b);
  Var softmax_rows(Var x);
  Var gelu(Var x);
  Var sigmoid(Var x);
  Var log(Var x);
  Var clamp(Var x, double lo, double hi);
  // Forward emits a one-hot row at hard_index; backward passes the output
  // gradient through to `soft` unchanged (straight-through estimator).
  Var straight_through_onehot(Var soft, std::size_t hard_index);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() target with respect to node v. Zero
  // tensor if no gradient reached it.
  const Tensor& grad(Var v) const;

  // Run reverse-mode accumulation from `out`. Without a seed the output must
  // be a single element and is seeded with 1; with a seed (same shape as the
  // output) gradients of a downstream graph are chained through.
  void backward(Var out, const Tensor* seed = nullptr);

  // Flush node gradients of parameter leaves into their Parameters,
  // scaled (for example by 1/batch when averaging per-sample losses).
  void add_param_grads(double scale = 1.0);

  std::size_t size() const { return nodes_.size(); }

  // Internal accessors used by op implementations.
  detail::Node& node(std::size_t i) { return nodes_[i]; }
  const detail::Node& node(std::size_t i) const { return nodes_[i]; }
  void accumulate_grad(std::size_t i, const Tensor& g);

 private:
  Var push(Tensor value, std::unique_ptr<detail::OpBase> op);
  // Deque, not vector: references handed out by value()/grad() stay valid
  // while further ops are added.
  std::deque<detail::Node> nodes_;
};

}  // namespace meshsmile
