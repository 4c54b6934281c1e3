#include "meshsmile/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>

#include "meshsmile/errors.hpp"

namespace meshsmile {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

MapMat map(Tensor& t) {
  return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

ConstMapMat map(const Tensor& t) {
  return ConstMapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

void check_rank2(const Tensor& t, const char* what) {
  require(t.rank() == 2, ErrorKind::ShapeMismatch, std::string(what) + " requires a rank-2 tensor");
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

using detail::OpBase;

struct AddOp final : OpBase {
  std::size_t a, b;
  AddOp(std::size_t a_, std::size_t b_) : a(a_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    g.accumulate_grad(a, dy);
    g.accumulate_grad(b, dy);
  }
};

struct SubOp final : OpBase {
  std::size_t a, b;
  SubOp(std::size_t a_, std::size_t b_) : a(a_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    g.accumulate_grad(a, dy);
    Tensor neg = dy;
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
    g.accumulate_grad(b, neg);
  }
};

struct MulOp final : OpBase {
  std::size_t a, b;
  MulOp(std::size_t a_, std::size_t b_) : a(a_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& av = g.node(a).value;
    const Tensor& bv = g.node(b).value;
    Tensor da = dy;
    Tensor db = dy;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      da[i] = dy[i] * bv[i];
      db[i] = dy[i] * av[i];
    }
    g.accumulate_grad(a, da);
    g.accumulate_grad(b, db);
  }
};

struct ScaleOp final : OpBase {
  std::size_t x;
  double s;
  ScaleOp(std::size_t x_, double s_) : x(x_), s(s_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= s;
    g.accumulate_grad(x, dx);
  }
};

struct AddScalarOp final : OpBase {
  std::size_t x;
  explicit AddScalarOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override { g.accumulate_grad(x, dy); }
};

struct MatmulOp final : OpBase {
  std::size_t a, b;
  MatmulOp(std::size_t a_, std::size_t b_) : a(a_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& av = g.node(a).value;
    const Tensor& bv = g.node(b).value;
    Tensor da = Tensor::zeros(av.shape());
    Tensor db = Tensor::zeros(bv.shape());
    map(da) = map(dy) * map(bv).transpose();
    map(db) = map(av).transpose() * map(dy);
    g.accumulate_grad(a, da);
    g.accumulate_grad(b, db);
  }
};

struct TransposeOp final : OpBase {
  std::size_t x;
  explicit TransposeOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    map(dx) = map(dy).transpose();
    g.accumulate_grad(x, dx);
  }
};

struct LinearOp final : OpBase {
  std::size_t x, w, b;
  LinearOp(std::size_t x_, std::size_t w_, std::size_t b_) : x(x_), w(w_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    const Tensor& wv = g.node(w).value;
    Tensor dx = Tensor::zeros(xv.shape());
    Tensor dw = Tensor::zeros(wv.shape());
    Tensor db = Tensor::zeros(g.node(b).value.shape());
    map(dx) = map(dy) * map(wv);
    map(dw) = map(dy).transpose() * map(xv);
    const std::size_t rows = dy.rows();
    const std::size_t cols = dy.cols();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) db[c] += dy.at(r, c);
    g.accumulate_grad(x, dx);
    g.accumulate_grad(w, dw);
    g.accumulate_grad(b, db);
  }
};

struct LayerNormOp final : OpBase {
  std::size_t x, gamma, beta;
  double eps;
  LayerNormOp(std::size_t x_, std::size_t g_, std::size_t b_, double eps_)
      : x(x_), gamma(g_), beta(b_), eps(eps_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    const Tensor& gv = g.node(gamma).value;
    const std::size_t rows = xv.rows();
    const std::size_t cols = xv.cols();
    Tensor dx = Tensor::zeros(xv.shape());
    Tensor dgamma = Tensor::zeros(gv.shape());
    Tensor dbeta = Tensor::zeros(gv.shape());
    std::vector<double> xhat(cols), dxhat(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double mean = 0.0;
      for (std::size_t c = 0; c < cols; ++c) mean += xv.at(r, c);
      mean /= static_cast<double>(cols);
      double var = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        double d = xv.at(r, c) - mean;
        var += d * d;
      }
      var /= static_cast<double>(cols);
      const double inv_sd = 1.0 / std::sqrt(var + eps);
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        xhat[c] = (xv.at(r, c) - mean) * inv_sd;
        dxhat[c] = dy.at(r, c) * gv[c];
        dgamma[c] += dy.at(r, c) * xhat[c];
        dbeta[c] += dy.at(r, c);
        m1 += dxhat[c];
        m2 += dxhat[c] * xhat[c];
      }
      m1 /= static_cast<double>(cols);
      m2 /= static_cast<double>(cols);
      for (std::size_t c = 0; c < cols; ++c)
        dx.at(r, c) = (dxhat[c] - m1 - xhat[c] * m2) * inv_sd;
    }
    g.accumulate_grad(x, dx);
    g.accumulate_grad(gamma, dgamma);
    g.accumulate_grad(beta, dbeta);
  }
};

struct ConcatRowsOp final : OpBase {
  std::vector<std::size_t> parts;
  explicit ConcatRowsOp(std::vector<std::size_t> p) : parts(std::move(p)) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const std::size_t cols = dy.cols();
    std::size_t row0 = 0;
    for (std::size_t p : parts) {
      const Tensor& pv = g.node(p).value;
      Tensor dp = Tensor::zeros(pv.shape());
      for (std::size_t r = 0; r < pv.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) dp.at(r, c) = dy.at(row0 + r, c);
      g.accumulate_grad(p, dp);
      row0 += pv.rows();
    }
  }
};

struct ConcatColsOp final : OpBase {
  std::vector<std::size_t> parts;
  explicit ConcatColsOp(std::vector<std::size_t> p) : parts(std::move(p)) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const std::size_t rows = dy.rows();
    std::size_t col0 = 0;
    for (std::size_t p : parts) {
      const Tensor& pv = g.node(p).value;
      Tensor dp = Tensor::zeros(pv.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pv.cols(); ++c) dp.at(r, c) = dy.at(r, col0 + c);
      g.accumulate_grad(p, dp);
      col0 += pv.cols();
    }
  }
};

struct GatherRowsOp final : OpBase {
  std::size_t x;
  std::vector<std::size_t> rows;
  GatherRowsOp(std::size_t x_, std::vector<std::size_t> r) : x(x_), rows(std::move(r)) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < dy.cols(); ++c) dx.at(rows[i], c) += dy.at(i, c);
    g.accumulate_grad(x, dx);
  }
};

struct SliceColsOp final : OpBase {
  std::size_t x, first;
  SliceColsOp(std::size_t x_, std::size_t first_) : x(x_), first(first_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) dx.at(r, first + c) = dy.at(r, c);
    g.accumulate_grad(x, dx);
  }
};

struct MeanRowsOp final : OpBase {
  std::size_t x;
  explicit MeanRowsOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    const double inv = 1.0 / static_cast<double>(xv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (std::size_t c = 0; c < xv.cols(); ++c) dx.at(r, c) = dy.at(0, c) * inv;
    g.accumulate_grad(x, dx);
  }
};

struct MaxRowsOp final : OpBase {
  std::size_t x;
  std::vector<std::size_t> argmax;  // per column, row index that won
  MaxRowsOp(std::size_t x_, std::vector<std::size_t> am) : x(x_), argmax(std::move(am)) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    for (std::size_t c = 0; c < dy.cols(); ++c) dx.at(argmax[c], c) = dy.at(0, c);
    g.accumulate_grad(x, dx);
  }
};

struct GroupMaxRowsOp final : OpBase {
  std::size_t x;
  std::vector<std::size_t> argmax;  // per (group, column), row index that won
  GroupMaxRowsOp(std::size_t x_, std::vector<std::size_t> am) : x(x_), argmax(std::move(am)) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    const std::size_t cols = dy.cols();
    for (std::size_t gi = 0; gi < dy.rows(); ++gi)
      for (std::size_t c = 0; c < cols; ++c) dx.at(argmax[gi * cols + c], c) += dy.at(gi, c);
    g.accumulate_grad(x, dx);
  }
};

struct SumAllOp final : OpBase {
  std::size_t x;
  explicit SumAllOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::full(xv.shape(), dy[0]);
    g.accumulate_grad(x, dx);
  }
};

struct AddBiasRowsOp final : OpBase {
  std::size_t x, b;
  AddBiasRowsOp(std::size_t x_, std::size_t b_) : x(x_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    g.accumulate_grad(x, dy);
    Tensor db = Tensor::zeros(g.node(b).value.shape());
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) db[c] += dy.at(r, c);
    g.accumulate_grad(b, db);
  }
};

struct AddBiasColsOp final : OpBase {
  std::size_t x, b;
  AddBiasColsOp(std::size_t x_, std::size_t b_) : x(x_), b(b_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    g.accumulate_grad(x, dy);
    Tensor db = Tensor::zeros(g.node(b).value.shape());
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) db[r] += dy.at(r, c);
    g.accumulate_grad(b, db);
  }
};

struct SoftmaxRowsOp final : OpBase {
  std::size_t x;
  explicit SoftmaxRowsOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor& y, const Tensor& dy) override {
    Tensor dx = Tensor::zeros(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += dy.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        dx.at(r, c) = y.at(r, c) * (dy.at(r, c) - dot);
    }
    g.accumulate_grad(x, dx);
  }
};

struct GeluOp final : OpBase {
  std::size_t x;
  explicit GeluOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double u = kGeluScale * (v + kGeluCubic * v * v * v);
      const double t = std::tanh(u);
      const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * v * v);
      dx[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
    g.accumulate_grad(x, dx);
  }
};

struct SigmoidOp final : OpBase {
  std::size_t x;
  explicit SigmoidOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor& y, const Tensor& dy) override {
    Tensor dx = Tensor::zeros(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
    g.accumulate_grad(x, dx);
  }
};

struct LogOp final : OpBase {
  std::size_t x;
  explicit LogOp(std::size_t x_) : x(x_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] = dy[i] / xv[i];
    g.accumulate_grad(x, dx);
  }
};

struct ClampOp final : OpBase {
  std::size_t x;
  double lo, hi;
  ClampOp(std::size_t x_, double lo_, double hi_) : x(x_), lo(lo_), hi(hi_) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    const Tensor& xv = g.node(x).value;
    Tensor dx = Tensor::zeros(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i)
      dx[i] = (xv[i] >= lo && xv[i] <= hi) ? dy[i] : 0.0;
    g.accumulate_grad(x, dx);
  }
};

struct StraightThroughOp final : OpBase {
  std::size_t soft;
  explicit StraightThroughOp(std::size_t s) : soft(s) {}
  void backward(Graph& g, const Tensor&, const Tensor& dy) override {
    g.accumulate_grad(soft, dy);
  }
};

}  // namespace

Var Graph::push(Tensor value, std::unique_ptr<detail::OpBase> op) {
  detail::Node n;
  n.value = std::move(value);
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::input(Tensor v) { return push(std::move(v), nullptr); }

Var Graph::constant(Tensor v) { return push(std::move(v), nullptr); }

Var Graph::param(Parameter& p) {
  Var v = push(p.value, nullptr);
  nodes_[v.idx].param = &p;
  return v;
}

Var Graph::add(Var a, Var b) {
  const Tensor& av = node(a.idx).value;
  const Tensor& bv = node(b.idx).value;
  require(av.same_shape(bv), ErrorKind::ShapeMismatch, "add requires matching shapes");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), std::make_unique<AddOp>(a.idx, b.idx));
}

Var Graph::sub(Var a, Var b) {
  const Tensor& av = node(a.idx).value;
  const Tensor& bv = node(b.idx).value;
  require(av.same_shape(bv), ErrorKind::ShapeMismatch, "sub requires matching shapes");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), std::make_unique<SubOp>(a.idx, b.idx));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& av = node(a.idx).value;
  const Tensor& bv = node(b.idx).value;
  require(av.same_shape(bv), ErrorKind::ShapeMismatch, "mul requires matching shapes");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), std::make_unique<MulOp>(a.idx, b.idx));
}

Var Graph::scale(Var a, double s) {
  Tensor out = node(a.idx).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return push(std::move(out), std::make_unique<ScaleOp>(a.idx, s));
}

Var Graph::add_scalar(Var a, double s) {
  Tensor out = node(a.idx).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return push(std::move(out), std::make_unique<AddScalarOp>(a.idx));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = node(a.idx).value;
  const Tensor& bv = node(b.idx).value;
  check_rank2(av, "matmul");
  check_rank2(bv, "matmul");
  require(av.cols() == bv.rows(), ErrorKind::ShapeMismatch, "matmul inner dimensions differ");
  Tensor out = Tensor::zeros({av.rows(), bv.cols()});
  map(out) = map(av) * map(bv);
  return push(std::move(out), std::make_unique<MatmulOp>(a.idx, b.idx));
}

Var Graph::transpose(Var a) {
  const Tensor& av = node(a.idx).value;
  check_rank2(av, "transpose");
  Tensor out = Tensor::zeros({av.cols(), av.rows()});
  map(out) = map(av).transpose();
  return push(std::move(out), std::make_unique<TransposeOp>(a.idx));
}

Var Graph::linear(Var x, Var w, Var b) {
  const Tensor& xv = node(x.idx).value;
  const Tensor& wv = node(w.idx).value;
  const Tensor& bv = node(b.idx).value;
  check_rank2(xv, "linear");
  check_rank2(wv, "linear");
  require(bv.rank() == 1, ErrorKind::ShapeMismatch, "linear bias must be rank-1");
  require(xv.cols() == wv.cols(), ErrorKind::ShapeMismatch, "linear input width mismatch");
  require(bv.size() == wv.rows(), ErrorKind::ShapeMismatch, "linear bias width mismatch");
  Tensor out = Tensor::zeros({xv.rows(), wv.rows()});
  map(out) = map(xv) * map(wv).transpose();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[c];
  return push(std::move(out), std::make_unique<LinearOp>(x.idx, w.idx, b.idx));
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = node(x.idx).value;
  const Tensor& gv = node(gamma.idx).value;
  const Tensor& bv = node(beta.idx).value;
  check_rank2(xv, "layer_norm");
  require(gv.rank() == 1 && bv.rank() == 1, ErrorKind::ShapeMismatch,
          "layer_norm gain and shift must be rank-1");
  require(gv.size() == xv.cols() && bv.size() == xv.cols(), ErrorKind::ShapeMismatch,
          "layer_norm gain and shift width mismatch");
  Tensor out = Tensor::zeros(xv.shape());
  const std::size_t cols = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xv.at(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      double d = xv.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv_sd = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c)
      out.at(r, c) = gv[c] * (xv.at(r, c) - mean) * inv_sd + bv[c];
  }
  return push(std::move(out), std::make_unique<LayerNormOp>(x.idx, gamma.idx, beta.idx, eps));
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::ShapeMismatch, "concat_rows needs at least one part");
  std::size_t rows = 0;
  const std::size_t cols = node(parts[0].idx).value.cols();
  std::vector<std::size_t> idx;
  idx.reserve(parts.size());
  for (Var p : parts) {
    const Tensor& pv = node(p.idx).value;
    check_rank2(pv, "concat_rows");
    require(pv.cols() == cols, ErrorKind::ShapeMismatch, "concat_rows column widths differ");
    rows += pv.rows();
    idx.push_back(p.idx);
  }
  Tensor out = Tensor::zeros({rows, cols});
  std::size_t row0 = 0;
  for (std::size_t i : idx) {
    const Tensor& pv = node(i).value;
    for (std::size_t r = 0; r < pv.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) out.at(row0 + r, c) = pv.at(r, c);
    row0 += pv.rows();
  }
  return push(std::move(out), std::make_unique<ConcatRowsOp>(std::move(idx)));
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::ShapeMismatch, "concat_cols needs at least one part");
  std::size_t cols = 0;
  const std::size_t rows = node(parts[0].idx).value.rows();
  std::vector<std::size_t> idx;
  idx.reserve(parts.size());
  for (Var p : parts) {
    const Tensor& pv = node(p.idx).value;
    check_rank2(pv, "concat_cols");
    require(pv.rows() == rows, ErrorKind::ShapeMismatch, "concat_cols row counts differ");
    cols += pv.cols();
    idx.push_back(p.idx);
  }
  Tensor out = Tensor::zeros({rows, cols});
  std::size_t col0 = 0;
  for (std::size_t i : idx) {
    const Tensor& pv = node(i).value;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out.at(r, col0 + c) = pv.at(r, c);
    col0 += pv.cols();
  }
  return push(std::move(out), std::make_unique<ConcatColsOp>(std::move(idx)));
}

Var Graph::gather_rows(Var x, std::vector<std::size_t> rows) {
  const Tensor& xv = node(x.idx).value;
  check_rank2(xv, "gather_rows");
  for (std::size_t r : rows)
    require(r < xv.rows(), ErrorKind::ShapeMismatch, "gather_rows index out of range");
  Tensor out = Tensor::zeros({rows.size(), xv.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(i, c) = xv.at(rows[i], c);
  return push(std::move(out), std::make_unique<GatherRowsOp>(x.idx, std::move(rows)));
}

Var Graph::slice_cols(Var x, std::size_t first, std::size_t count) {
  const Tensor& xv = node(x.idx).value;
  check_rank2(xv, "slice_cols");
  require(first + count <= xv.cols(), ErrorKind::ShapeMismatch, "slice_cols range out of bounds");
  Tensor out = Tensor::zeros({xv.rows(), count});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = xv.at(r, first + c);
  return push(std::move(out), std::make_unique<SliceColsOp>(x.idx, first));
}

Var Graph::mean_rows(Var x) {
  const Tensor& xv = node(x.idx).value;
  check_rank2(xv, "mean_rows");
  require(xv.rows() > 0, ErrorKind::ShapeMismatch, "mean_rows on empty tensor");
  Tensor out = Tensor::zeros({1, xv.cols()});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(0, c) += xv.at(r, c);
  for (std::size_t c = 0; c < xv.cols(); ++c) out.at(0, c) /= static_cast<double>(xv.rows());
  return push(std::move(out), std::make_unique<MeanRowsOp>(x.idx));
}

Var Graph::max_rows(Var x) {
  const Tensor& xv = node(x.idx).value;
  check_rank2(xv, "max_rows");
  require(xv.rows() > 0, ErrorKind::ShapeMismatch, "max_rows on empty tensor");
  Tensor out = Tensor::zeros({1, xv.cols()});
  std::vector<std::size_t> argmax(xv.cols(), 0);
  for (std::size_t c = 0; c < xv.cols(); ++c) {
    double best = xv.at(0, c);
    for (std::size_t r = 1; r < xv.rows(); ++r) {
      if (xv.at(r, c) > best) {
        best = xv.at(r, c);
        argmax[c] = r;
      }
    }
    out.at(0, c) = best;
  }
  return push(std::move(out), std::make_unique<MaxRowsOp>(x.idx, std::move(argmax)));
}

Var Graph::group_max_rows(Var x, std::vector<std::size_t> group_of_row, std::size_t n_groups) {
  const Tensor& xv = node(x.idx).value;
  check_rank2(xv, "group_max_rows");
  require(group_of_row.size() == xv.rows(), ErrorKind::ShapeMismatch,
          "group_max_rows needs one group per row");
  std::vector<std::size_t> count(n_groups, 0);
  for (std::size_t g : group_of_row) {
    require(g < n_groups, ErrorKind::ShapeMismatch, "group_max_rows group index out of range");
    ++count[g];
  }
  for (std::size_t g = 0; g < n_groups; ++g)
    require(count[g] > 0, ErrorKind::ShapeMismatch, "group_max_rows has an empty group");
  const std::size_t cols = xv.cols();
  Tensor out = Tensor::zeros({n_groups, cols});
  std::vector<std::size_t> argmax(n_groups * cols, static_cast<std::size_t>(-1));
  std::vector<bool> seen(n_groups, false);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const std::size_t gi = group_of_row[r];
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = xv.at(r, c);
      if (!seen[gi] || v > out.at(gi, c)) {
        out.at(gi, c) = v;
        argmax[gi * cols + c] = r;
      }
    }
    seen[gi] = true;
  }
  return push(std::move(out), std::make_unique<GroupMaxRowsOp>(x.idx, std::move(argmax)));
}

Var Graph::sum_all(Var x) {
  const Tensor& xv = node(x.idx).value;
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  return push(Tensor::scalar(s), std::make_unique<SumAllOp>(x.idx));
}

Var Graph::add_bias_rows(Var x, Var b) {
  const Tensor& xv = node(x.idx).value;
  const Tensor& bv = node(b.idx).value;
  check_rank2(xv, "add_bias_rows");
  require(bv.rank() == 1, ErrorKind::ShapeMismatch, "add_bias_rows bias must be rank-1");
  require(bv.size() == xv.cols(), ErrorKind::ShapeMismatch, "add_bias_rows width mismatch");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[c];
  return push(std::move(out), std::make_unique<AddBiasRowsOp>(x.idx, b.idx));
}

Var Graph::add_bias_cols(Var x, Var b) {
  const Tensor& xv = node(x.idx).value;
  const Tensor& bv = node(b.idx).value;
  check_rank2(xv, "add_bias_cols");
  require(bv.rank() == 1, ErrorKind::ShapeMismatch, "add_bias_cols bias must be rank-1");
  require(bv.size() == xv.rows(), ErrorKind::ShapeMismatch, "add_bias_cols height mismatch");
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[r];
  return push(std::move(out), std::make_unique<AddBiasColsOp>(x.idx, b.idx));
}

Var Graph::softmax_rows(Var x) {
  const Tensor& xv = node(x.idx).value;
  check_rank2(xv, "softmax_rows");
  Tensor out = Tensor::zeros(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mx = xv.at(r, 0);
    for (std::size_t c = 1; c < xv.cols(); ++c) mx = std::max(mx, xv.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) {
      out.at(r, c) = std::exp(xv.at(r, c) - mx);
      sum += out.at(r, c);
    }
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(r, c) /= sum;
  }
  return push(std::move(out), std::make_unique<SoftmaxRowsOp>(x.idx));
}

Var Graph::gelu(Var x) {
  const Tensor& xv = node(x.idx).value;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    const double u = kGeluScale * (v + kGeluCubic * v * v * v);
    out[i] = 0.5 * v * (1.0 + std::tanh(u));
  }
  return push(std::move(out), std::make_unique<GeluOp>(x.idx));
}

Var Graph::sigmoid(Var x) {
  const Tensor& xv = node(x.idx).value;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return push(std::move(out), std::make_unique<SigmoidOp>(x.idx));
}

Var Graph::log(Var x) {
  const Tensor& xv = node(x.idx).value;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    require(xv[i] > 0.0, ErrorKind::NonFiniteValue, "log of a non-positive value");
    out[i] = std::log(xv[i]);
  }
  return push(std::move(out), std::make_unique<LogOp>(x.idx));
}

Var Graph::clamp(Var x, double lo, double hi) {
  const Tensor& xv = node(x.idx).value;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  return push(std::move(out), std::make_unique<ClampOp>(x.idx, lo, hi));
}

Var Graph::straight_through_onehot(Var soft, std::size_t hard_index) {
  const Tensor& sv = node(soft.idx).value;
  check_rank2(sv, "straight_through_onehot");
  require(sv.rows() == 1, ErrorKind::ShapeMismatch, "straight_through_onehot expects a row vector");
  require(hard_index < sv.cols(), ErrorKind::ShapeMismatch,
          "straight_through_onehot index out of range");
  Tensor out = Tensor::zeros(sv.shape());
  out.at(0, hard_index) = 1.0;
  return push(std::move(out), std::make_unique<StraightThroughOp>(soft.idx));
}

const Tensor& Graph::value(Var v) const {
  require(v.idx < nodes_.size(), ErrorKind::InvariantViolation, "value() on a foreign handle");
  return nodes_[v.idx].value;
}

const Tensor& Graph::grad(Var v) const {
  require(v.idx < nodes_.size(), ErrorKind::InvariantViolation, "grad() on a foreign handle");
  return nodes_[v.idx].grad;
}

void Graph::accumulate_grad(std::size_t i, const Tensor& g) {
  detail::Node& n = nodes_[i];
  require(n.grad.same_shape(g), ErrorKind::ShapeMismatch, "gradient shape mismatch");
  for (std::size_t k = 0; k < g.size(); ++k) n.grad[k] += g[k];
  n.touched = true;
}

void Graph::backward(Var out, const Tensor* seed) {
  require(out.idx < nodes_.size(), ErrorKind::InvariantViolation, "backward() on a foreign handle");
  for (detail::Node& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape());
    n.touched = false;
  }
  detail::Node& root = nodes_[out.idx];
  if (seed != nullptr) {
    require(root.value.same_shape(*seed), ErrorKind::ShapeMismatch,
            "backward seed shape mismatch");
    root.grad = *seed;
  } else {
    require(root.value.size() == 1, ErrorKind::ShapeMismatch,
            "backward without a seed needs a scalar output");
    root.grad.fill(1.0);
  }
  root.touched = true;
  for (std::size_t i = out.idx + 1; i-- > 0;) {
    detail::Node& n = nodes_[i];
    if (n.op && n.touched) n.op->backward(*this, n.value, n.grad);
  }
}

void Graph::add_param_grads(double scale) {
  for (const detail::Node& n : nodes_) {
    if (n.param == nullptr || !n.touched) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += scale * n.grad[i];
  }
}

}  // namespace meshsmile
