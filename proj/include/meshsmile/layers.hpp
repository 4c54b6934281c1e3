#pragma once

#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "meshsmile/graph.hpp"
#include "meshsmile/param.hpp"
#include "meshsmile/rng.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile {

// Owns every trainable parameter of a model in creation order. Names must be
// unique; checkpoints are written and matched by name, so creation order and
// naming are part of the on-disk contract.
class ParamStore {
 public:
  // Weight matrix [d_out, d_in], entries uniform in +-1/sqrt(d_in).
  Parameter& weight(const std::string& name, std::size_t d_out, std::size_t d_in, Rng& rng);
  // Zero vector of length n (biases, layer-norm shifts).
  Parameter& zeros(const std::string& name, std::size_t n);
  // All-ones vector of length n (layer-norm gains).
  Parameter& ones(const std::string& name, std::size_t n);
  // Zero matrix (positional embeddings).
  Parameter& zero_matrix(const std::string& name, std::size_t rows, std::size_t cols);
  Parameter& add(const std::string& name, Tensor init);

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  std::vector<Parameter*> all();
  std::size_t count() const { return params_.size(); }
  std::size_t total_values() const;
  void zero_grads();

 private:
  std::deque<Parameter> params_;
};

struct LinearParams {
  Parameter* w = nullptr;  // [d_out, d_in]
  Parameter* b = nullptr;  // [d_out]
};

struct LayerNormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

struct MlpParams {
  LinearParams fc1, fc2;
};

struct MhaParams {
  LinearParams q, k, v, o;
  std::size_t heads = 1;
};

struct BlockParams {
  LayerNormParams ln1, ln2;
  MhaParams mha;
  MlpParams mlp;
};

LinearParams make_linear(ParamStore& store, const std::string& name, std::size_t d_out,
                         std::size_t d_in, Rng& rng);
LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t d);
MlpParams make_mlp(ParamStore& store, const std::string& name, std::size_t d,
                   std::size_t hidden, Rng& rng);
MlpParams make_mlp(ParamStore& store, const std::string& name, std::size_t d_in,
                   std::size_t hidden, std::size_t d_out, Rng& rng);
MhaParams make_mha(ParamStore& store, const std::string& name, std::size_t d,
                   std::size_t heads, Rng& rng);
BlockParams make_block(ParamStore& store, const std::string& name, std::size_t d,
                       std::size_t heads, Rng& rng);

Var linear(Graph& g, Var x, const LinearParams& p);
Var layer_norm(Graph& g, Var x, const LayerNormParams& p, double eps = 1e-5);
// fc1 -> gelu -> fc2.
Var mlp(Graph& g, Var x, const MlpParams& p);

struct AttentionOut {
  Var out;
  Var weights;  // row-stochastic [t_q, t_k]
};

// softmax(q k^T / sqrt(d)) v over already-projected inputs.
AttentionOut attention(Graph& g, Var q, Var k, Var v);
// Projected per-head attention, concatenated and output-projected. The head
// count must divide the channel width.
Var multi_head_attention(Graph& g, Var x, const MhaParams& p);
// Pre-norm residual block: x + mha(ln(x)), then + mlp(ln(.)).
Var transformer_block(Graph& g, Var x, const BlockParams& p);

// Plain-tensor softmax along one axis of a rank-1 or rank-2 tensor,
// max-subtracted for stability.
Tensor softmax(const Tensor& x, std::size_t axis);

// Relaxed categorical sample over rank-1 logits. Noise is standard Gumbel
// drawn from rng unless an explicit tensor is supplied (deterministic test
// mode). Hard mode emits the exact one-hot of the argmax.
Tensor gumbel_softmax(const Tensor& logits, double tau, bool hard, const Tensor* noise,
                      Rng* rng);

// Indices of the k largest scores, descending, ties to the lowest index.
std::vector<std::size_t> top_k_select(const Tensor& scores, std::size_t k);

// For each of L points (rows of [L,3]) the k nearest other points by
// Euclidean distance, ascending, ties to the lowest index; self excluded.
std::vector<std::vector<std::size_t>> knn_indices(const Tensor& points, std::size_t k);

// Index of the largest entry, ties to the lowest index. Rank-1 or a single
// row.
std::size_t argmax_index(const Tensor& x);

double bce_loss(double pred, int label);
// Graph form: clamps pred into [1e-7, 1 - 1e-7] before the logs.
Var bce_loss(Graph& g, Var pred, int label);

Var mean_all(Graph& g, Var x);

struct PickResult {
  Var onehot;         // [1, m] selected row; straight-through in train mode
  Var soft;           // [1, m] underlying soft distribution
  std::size_t index;  // hard choice
};

// Hard Gumbel-Softmax pick over a [1, m] logit row with straight-through
// backward. Pass noise == nullptr for the zero-noise deterministic form.
PickResult st_pick(Graph& g, Var logits, double tau, const Tensor* noise);

}  // namespace meshsmile
