#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"

namespace patchnet {

// Central finite-difference verification of an analytic gradient. The checked
// function is evaluated in F64 regardless of the precision the implementation
// trains in; relative error uses |a-b| / max(|a|, |b|, 1e-8).

struct GradCheckReport {
  // Per-coordinate metric: max over i of |a_i - n_i| / max(|a_i|, |n_i|, 1e-8).
  double max_rel_error = 0.0;
  size_t worst_coordinate = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  // Vector metric: ||a - n|| / max(||a||, ||n||, 1e-8). Robust to the
  // difference-quotient noise floor on near-zero coordinates, so it is the
  // right gate for losses with saturated exponentials.
  double norm_rel_error = 0.0;
  size_t coordinates = 0;

  bool pass(double tolerance) const { return max_rel_error < tolerance; }
  bool pass_norm(double tolerance) const { return norm_rel_error < tolerance; }
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// `f` maps a point to a scalar; `analytic` is the gradient under test at
// `point`. Evaluations must stay finite at point +/- h per coordinate.
inline GradCheckReport gradient_check(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> point, std::span<const double> analytic, double h = 1e-5) {
  require(point.size() == analytic.size(), ErrorCode::InvariantViolation,
          "gradient_check: gradient size " + format_int(static_cast<std::int64_t>(analytic.size())) +
              " does not match point size " + format_int(static_cast<std::int64_t>(point.size())));
  require(h > 0, ErrorCode::InvariantViolation, "gradient_check: h must be > 0");

  std::vector<double> x(point.begin(), point.end());
  GradCheckReport report;
  report.coordinates = x.size();
  double diff_sq = 0, analytic_sq = 0, numeric_sq = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    double fp = f(x);
    x[i] = saved - h;
    double fm = f(x);
    x[i] = saved;
    require(std::isfinite(fp) && std::isfinite(fm), ErrorCode::InvariantViolation,
            "gradient_check: non-finite evaluation at coordinate " +
                format_int(static_cast<std::int64_t>(i)));
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_coordinate = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    diff_sq += (analytic[i] - numeric) * (analytic[i] - numeric);
    analytic_sq += analytic[i] * analytic[i];
    numeric_sq += numeric * numeric;
  }
  report.norm_rel_error =
      std::sqrt(diff_sq) /
      std::max({std::sqrt(analytic_sq), std::sqrt(numeric_sq), 1e-8});
  return report;
}

}  // namespace patchnet
