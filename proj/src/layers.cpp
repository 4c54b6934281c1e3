#include "meshsmile/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "meshsmile/errors.hpp"

namespace meshsmile {

Parameter& ParamStore::weight(const std::string& name, std::size_t d_out, std::size_t d_in,
                              Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  Tensor w = Tensor::zeros({d_out, d_in});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
  return add(name, std::move(w));
}

Parameter& ParamStore::zeros(const std::string& name, std::size_t n) {
  return add(name, Tensor::zeros({n}));
}

Parameter& ParamStore::ones(const std::string& name, std::size_t n) {
  return add(name, Tensor::full({n}, 1.0));
}

Parameter& ParamStore::zero_matrix(const std::string& name, std::size_t rows, std::size_t cols) {
  return add(name, Tensor::zeros({rows, cols}));
}

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  require(find(name) == nullptr, ErrorKind::InvariantViolation,
          "duplicate parameter name: " + name);
  params_.emplace_back(name, std::move(init));
  return params_.back();
}

Parameter* ParamStore::find(std::string_view name) {
  for (Parameter& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParamStore::find(std::string_view name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (Parameter& p : params_) p.zero_grad();
}

LinearParams make_linear(ParamStore& store, const std::string& name, std::size_t d_out,
                         std::size_t d_in, Rng& rng) {
  LinearParams p;
  p.w = &store.weight(name + ".w", d_out, d_in, rng);
  p.b = &store.zeros(name + ".b", d_out);
  return p;
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t d) {
  LayerNormParams p;
  p.gamma = &store.ones(name + ".gamma", d);
  p.beta = &store.zeros(name + ".beta", d);
  return p;
}

MlpParams make_mlp(ParamStore& store, const std::string& name, std::size_t d, std::size_t hidden,
                   Rng& rng) {
  return make_mlp(store, name, d, hidden, d, rng);
}

MlpParams make_mlp(ParamStore& store, const std::string& name, std::size_t d_in,
                   std::size_t hidden, std::size_t d_out, Rng& rng) {
  MlpParams p;
  p.fc1 = make_linear(store, name + ".fc1", hidden, d_in, rng);
  p.fc2 = make_linear(store, name + ".fc2", d_out, hidden, rng);
  return p;
}

MhaParams make_mha(ParamStore& store, const std::string& name, std::size_t d, std::size_t heads,
                   Rng& rng) {
  require(heads >= 1 && d % heads == 0, ErrorKind::IndivisibleHeads,
          "head count must divide the channel width");
  MhaParams p;
  p.q = make_linear(store, name + ".q", d, d, rng);
  p.k = make_linear(store, name + ".k", d, d, rng);
  p.v = make_linear(store, name + ".v", d, d, rng);
  p.o = make_linear(store, name + ".o", d, d, rng);
  p.heads = heads;
  return p;
}

BlockParams make_block(ParamStore& store, const std::string& name, std::size_t d,
                       std::size_t heads, Rng& rng) {
  BlockParams p;
  p.ln1 = make_layer_norm(store, name + ".ln1", d);
  p.ln2 = make_layer_norm(store, name + ".ln2", d);
  p.mha = make_mha(store, name + ".mha", d, heads, rng);
  p.mlp = make_mlp(store, name + ".mlp", d, 4 * d, rng);
  return p;
}

Var linear(Graph& g, Var x, const LinearParams& p) {
  return g.linear(x, g.param(*p.w), g.param(*p.b));
}

Var layer_norm(Graph& g, Var x, const LayerNormParams& p, double eps) {
  return g.layer_norm(x, g.param(*p.gamma), g.param(*p.beta), eps);
}

Var mlp(Graph& g, Var x, const MlpParams& p) {
  return linear(g, g.gelu(linear(g, x, p.fc1)), p.fc2);
}

AttentionOut attention(Graph& g, Var q, Var k, Var v) {
  const Tensor& qv = g.value(q);
  const Tensor& kv = g.value(k);
  const Tensor& vv = g.value(v);
  require(qv.rank() == 2 && kv.rank() == 2 && vv.rank() == 2, ErrorKind::ShapeMismatch,
          "attention inputs must be rank-2");
  require(qv.cols() == kv.cols(), ErrorKind::ShapeMismatch, "attention q/k width mismatch");
  require(kv.rows() == vv.rows(), ErrorKind::ShapeMismatch, "attention k/v length mismatch");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qv.cols()));
  Var scores = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_d);
  Var weights = g.softmax_rows(scores);
  return AttentionOut{g.matmul(weights, v), weights};
}

Var multi_head_attention(Graph& g, Var x, const MhaParams& p) {
  const std::size_t d = g.value(x).cols();
  require(p.heads >= 1 && d % p.heads == 0, ErrorKind::IndivisibleHeads,
          "head count must divide the channel width");
  Var q = linear(g, x, p.q);
  Var k = linear(g, x, p.k);
  Var v = linear(g, x, p.v);
  const std::size_t dh = d / p.heads;
  std::vector<Var> heads;
  heads.reserve(p.heads);
  for (std::size_t h = 0; h < p.heads; ++h) {
    Var qh = g.slice_cols(q, h * dh, dh);
    Var kh = g.slice_cols(k, h * dh, dh);
    Var vh = g.slice_cols(v, h * dh, dh);
    heads.push_back(attention(g, qh, kh, vh).out);
  }
  Var cat = p.heads == 1 ? heads[0] : g.concat_cols(heads);
  return linear(g, cat, p.o);
}

Var transformer_block(Graph& g, Var x, const BlockParams& p) {
  Var a = g.add(x, multi_head_attention(g, layer_norm(g, x, p.ln1), p.mha));
  return g.add(a, mlp(g, layer_norm(g, a, p.ln2), p.mlp));
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(x.rank() == 1 || x.rank() == 2, ErrorKind::ShapeMismatch,
          "softmax expects rank-1 or rank-2");
  if (x.rank() == 1) {
    require(axis == 0, ErrorKind::ShapeMismatch, "softmax axis out of range");
    Tensor out = x;
    double mx = out[0];
    for (std::size_t i = 1; i < out.size(); ++i) mx = std::max(mx, out[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::exp(out[i] - mx);
      sum += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
    return out;
  }
  require(axis <= 1, ErrorKind::ShapeMismatch, "softmax axis out of range");
  Tensor out = x;
  const std::size_t slices = axis == 1 ? x.rows() : x.cols();
  const std::size_t len = axis == 1 ? x.cols() : x.rows();
  for (std::size_t s = 0; s < slices; ++s) {
    auto read = [&](std::size_t i) { return axis == 1 ? x.at(s, i) : x.at(i, s); };
    auto write = [&](std::size_t i, double v) {
      if (axis == 1)
        out.at(s, i) = v;
      else
        out.at(i, s) = v;
    };
    double mx = read(0);
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, read(i));
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(read(i) - mx);
      write(i, e);
      sum += e;
    }
    for (std::size_t i = 0; i < len; ++i) write(i, (axis == 1 ? out.at(s, i) : out.at(i, s)) / sum);
  }
  return out;
}

Tensor gumbel_softmax(const Tensor& logits, double tau, bool hard, const Tensor* noise,
                      Rng* rng) {
  require(logits.rank() == 1, ErrorKind::ShapeMismatch, "gumbel_softmax expects rank-1 logits");
  require(tau > 0.0, ErrorKind::NonPositiveTemperature, "temperature must be positive");
  Tensor z = logits;
  if (noise != nullptr) {
    require(noise->same_shape(logits), ErrorKind::ShapeMismatch, "noise shape mismatch");
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += (*noise)[i];
  } else if (rng != nullptr) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += rng->gumbel();
  }
  for (std::size_t i = 0; i < z.size(); ++i) z[i] /= tau;
  Tensor soft = softmax(z, 0);
  if (!hard) return soft;
  Tensor out = Tensor::zeros(soft.shape());
  out[argmax_index(z)] = 1.0;
  return out;
}

std::vector<std::size_t> top_k_select(const Tensor& scores, std::size_t k) {
  require(scores.rank() == 1, ErrorKind::ShapeMismatch, "top_k_select expects rank-1 scores");
  require(k >= 1 && k <= scores.size(), ErrorKind::KOutOfRange, "k outside [1, n]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  order.resize(k);
  return order;
}

std::vector<std::vector<std::size_t>> knn_indices(const Tensor& points, std::size_t k) {
  require(points.rank() == 2 && points.cols() == 3, ErrorKind::ShapeMismatch,
          "knn_indices expects [L, 3] points");
  const std::size_t L = points.rows();
  require(k >= 1 && k + 1 <= L, ErrorKind::KOutOfRange, "k outside [1, L-1]");
  std::vector<std::vector<std::size_t>> out(L);
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(L - 1);
  for (std::size_t i = 0; i < L; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < L; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = points.at(i, c) - points.at(j, c);
        d2 += d * d;
      }
      dist.emplace_back(d2, j);
    }
    std::sort(dist.begin(), dist.end());
    out[i].reserve(k);
    for (std::size_t j = 0; j < k; ++j) out[i].push_back(dist[j].second);
  }
  return out;
}

std::size_t argmax_index(const Tensor& x) {
  require(x.size() >= 1, ErrorKind::ShapeMismatch, "argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

namespace {
constexpr double kBceClamp = 1e-7;
}

double bce_loss(double pred, int label) {
  const double p = std::clamp(pred, kBceClamp, 1.0 - kBceClamp);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

Var bce_loss(Graph& g, Var pred, int label) {
  require(label == 0 || label == 1, ErrorKind::InvariantViolation, "label must be 0 or 1");
  Var p = g.clamp(pred, kBceClamp, 1.0 - kBceClamp);
  if (label == 1) return g.scale(g.log(p), -1.0);
  Var om = g.add_scalar(g.scale(p, -1.0), 1.0);
  return g.scale(g.log(om), -1.0);
}

Var mean_all(Graph& g, Var x) {
  const std::size_t n = g.value(x).size();
  return g.scale(g.sum_all(x), 1.0 / static_cast<double>(n));
}

PickResult st_pick(Graph& g, Var logits, double tau, const Tensor* noise) {
  require(tau > 0.0, ErrorKind::NonPositiveTemperature, "temperature must be positive");
  const Tensor& lv = g.value(logits);
  require(lv.rank() == 2 && lv.rows() == 1, ErrorKind::ShapeMismatch,
          "st_pick expects a [1, m] logit row");
  Var z = logits;
  if (noise != nullptr) {
    require(noise->same_shape(lv), ErrorKind::ShapeMismatch, "noise shape mismatch");
    z = g.add(logits, g.constant(*noise));
  }
  Var soft = g.softmax_rows(g.scale(z, 1.0 / tau));
  const std::size_t index = argmax_index(g.value(z));
  return PickResult{g.straight_through_onehot(soft, index), soft, index};
}

}  // namespace meshsmile
