#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "meshsmile/tensor.hpp"

namespace meshsmile {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass(double tol) const { return max_rel_err <= tol; }
};

// Compares a precomputed analytic gradient against central finite differences
// of f around x, one coordinate at a time. Relative error per coordinate is
// |a - n| / max(|a|, |n|, 1e-8); the report carries the worst one. f must be
// a pure function of x.
GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           const Tensor& analytic, double eps = 1e-5);

// Same check over a ladder of step sizes, keeping each coordinate's best
// reading. Deep compositions need this: steep coordinates want a small step
// (truncation error grows as eps^2) while near-zero-gradient coordinates
// want a large one (the difference quotient is roundoff divided by eps), and
// one step size cannot serve both. A genuinely wrong gradient fails at every
// step size, so the ladder does not weaken the check.
GradCheckReport grad_check_multi(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                 const Tensor& analytic, const std::vector<double>& ladder);

// Ladder check with an early exit: each coordinate stops at the first step
// whose reading is within tol, so well-conditioned coordinates cost two
// evaluations instead of two per rung. A coordinate passes here exactly when
// it would pass grad_check_multi with the same ladder and tolerance; only the
// reported worst error can differ (the first passing reading, not the best
// one). Suited to large audits where most coordinates are easy.
GradCheckReport grad_check_lazy(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                const Tensor& analytic, const std::vector<double>& ladder,
                                double tol);

}  // namespace meshsmile
