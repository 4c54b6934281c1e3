#pragma once

#include <functional>
#include <vector>

#include "meshsmile/gradcheck.hpp"
#include "meshsmile/graph.hpp"
#include "meshsmile/rng.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Gradient-checks an op built by `build` against central differences, for
// every input tensor. The scalar loss is a fixed random weighting of the
// output so that index mix-ups change the loss (a plain sum is invariant
// under too many remappings to catch them).
inline double check_op_grads(
    const std::function<Var(Graph&, const std::vector<Var>&)>& build,
    const std::vector<Tensor>& inputs, std::uint64_t weight_seed = 99) {
  auto build_loss = [&](Graph& g, const std::vector<Tensor>& xs) {
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(g.input(x));
    Var y = build(g, vars);
    Rng wr(weight_seed);
    Tensor w = random_tensor(g.value(y).shape(), wr);
    Var loss = g.sum_all(g.mul(y, g.constant(w)));
    return std::pair<std::vector<Var>, Var>{vars, loss};
  };

  Graph g;
  auto [vars, loss] = build_loss(g, inputs);
  g.backward(loss);

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto f = [&, i](const Tensor& x) {
      std::vector<Tensor> probe = inputs;
      probe[i] = x;
      Graph fresh;
      auto [pv, ploss] = build_loss(fresh, probe);
      return fresh.value(ploss).item();
    };
    GradCheckReport report = grad_check(f, inputs[i], g.grad(vars[i]));
    worst = std::max(worst, report.max_rel_err);
  }
  return worst;
}

}  // namespace meshsmile::testing
