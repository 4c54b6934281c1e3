#include "meshsmile/optim.hpp"

#include <cmath>
#include <utility>

#include "meshsmile/errors.hpp"

namespace meshsmile {

void adamw_step(Parameter& p, AdamWState& s, const AdamWConfig& cfg) {
  if (s.m.empty()) {
    s.m = Tensor::zeros(p.value.shape());
    s.v = Tensor::zeros(p.value.shape());
  }
  require(s.m.same_shape(p.value) && s.v.same_shape(p.value), ErrorKind::ShapeMismatch,
          "optimizer state shape mismatch for " + p.name);
  s.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i];
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    p.value[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p.value[i]);
  }
}

AdamW::AdamW(std::vector<Parameter*> params, AdamWConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void AdamW::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) adamw_step(*params_[i], states_[i], cfg_);
}

void AdamW::zero_grads() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace meshsmile
