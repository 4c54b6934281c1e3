#pragma once

#include <string>

#include "meshsmile/tensor.hpp"

namespace meshsmile {

// A named trainable value plus its gradient accumulator. The gradient always
// has the same shape as the value and starts at zero.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace meshsmile
