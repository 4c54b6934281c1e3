#include "meshsmile/tensor.hpp"

#include <cmath>

#include "meshsmile/errors.hpp"

namespace meshsmile {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == product(shape_), ErrorKind::ShapeMismatch,
          "tensor value count does not match shape");
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

std::size_t Tensor::rows() const {
  require(rank() == 2, ErrorKind::ShapeMismatch, "rows() requires a rank-2 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require(rank() == 2, ErrorKind::ShapeMismatch, "cols() requires a rank-2 tensor");
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : values_) x = v;
}

double Tensor::item() const {
  require(values_.size() == 1, ErrorKind::ShapeMismatch, "item() requires a size-1 tensor");
  return values_[0];
}

}  // namespace meshsmile
