#pragma once

#include <cstddef>
#include <vector>

#include "meshsmile/param.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  Tensor m;
  Tensor v;
  std::size_t step = 0;
};

// One decoupled-weight-decay update from the gradient currently stored on the
// parameter: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
// with bias-corrected moments.
void adamw_step(Parameter& p, AdamWState& s, const AdamWConfig& cfg);

// Optimizer over a fixed parameter set; per-parameter moment state is created
// on construction.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, AdamWConfig cfg);
  void step();
  void zero_grads();
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamWState> states_;
  AdamWConfig cfg_;
};

}  // namespace meshsmile
