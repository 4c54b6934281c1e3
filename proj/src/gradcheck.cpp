#include "meshsmile/gradcheck.hpp"

#include <cmath>

#include "meshsmile/errors.hpp"

namespace meshsmile {

namespace {

struct CoordResult {
  double rel = 0.0;
  double numeric = 0.0;
};

CoordResult coord_rel_err(const std::function<double(const Tensor&)>& f, Tensor& probe,
                          std::size_t i, double analytic, double eps) {
  const double saved = probe[i];
  probe[i] = saved + eps;
  const double up = f(probe);
  probe[i] = saved - eps;
  const double down = f(probe);
  probe[i] = saved;
  const double numeric = (up - down) / (2.0 * eps);
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return {std::fabs(analytic - numeric) / denom, numeric};
}

}  // namespace

GradCheckReport grad_check(const std::function<double(const Tensor&)>& f, const Tensor& x,
                           const Tensor& analytic, double eps) {
  require(analytic.same_shape(x), ErrorKind::ShapeMismatch,
          "analytic gradient shape must match the input");
  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CoordResult r = coord_rel_err(f, probe, i, analytic[i], eps);
    if (r.rel > report.max_rel_err) {
      report.max_rel_err = r.rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = r.numeric;
    }
  }
  return report;
}

GradCheckReport grad_check_multi(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                 const Tensor& analytic, const std::vector<double>& ladder) {
  require(analytic.same_shape(x), ErrorKind::ShapeMismatch,
          "analytic gradient shape must match the input");
  require(!ladder.empty(), ErrorKind::InvariantViolation, "empty step ladder");
  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CoordResult best;
    best.rel = -1.0;
    for (double eps : ladder) {
      CoordResult r = coord_rel_err(f, probe, i, analytic[i], eps);
      if (best.rel < 0.0 || r.rel < best.rel) best = r;
      if (best.rel == 0.0) break;
    }
    if (best.rel > report.max_rel_err) {
      report.max_rel_err = best.rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = best.numeric;
    }
  }
  return report;
}

GradCheckReport grad_check_lazy(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                const Tensor& analytic, const std::vector<double>& ladder,
                                double tol) {
  require(analytic.same_shape(x), ErrorKind::ShapeMismatch,
          "analytic gradient shape must match the input");
  require(!ladder.empty(), ErrorKind::InvariantViolation, "empty step ladder");
  require(tol >= 0.0, ErrorKind::InvariantViolation, "negative tolerance");
  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    CoordResult best;
    best.rel = -1.0;
    for (double eps : ladder) {
      CoordResult r = coord_rel_err(f, probe, i, analytic[i], eps);
      if (best.rel < 0.0 || r.rel < best.rel) best = r;
      if (best.rel <= tol) break;
    }
    if (best.rel > report.max_rel_err) {
      report.max_rel_err = best.rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = best.numeric;
    }
  }
  return report;
}

}  // namespace meshsmile
