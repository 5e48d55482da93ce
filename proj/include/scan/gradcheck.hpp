#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "scan/error.hpp"
#include "scan/optim.hpp"

namespace scan {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn(true)` must zero nothing itself: grad_check zeroes every grad,
/// then calls it once so it can run forward + backward and populate grads.
/// `loss_fn(false)` evaluates the loss only. Both must be deterministic.
///
/// Relative error is |a - n| / max(|a|, |n|, floor); components smaller than
/// `floor` are effectively compared in absolute terms.
inline GradCheckResult grad_check_detailed(const std::function<double(bool)>& loss_fn,
                                           std::span<ParamState<double>* const> params,
                                           double eps = 1e-5, double floor = 1e-4) {
  if (!(eps > 0)) throw ConfigError("grad_check: eps must be > 0");
  for (auto* p : params) p->zero_grad();
  const double base = loss_fn(true);
  if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite");

  GradCheckResult result;
  for (auto* p : params) {
    const Matrix<double> analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + eps;
      const double up = loss_fn(false);
      w = saved - eps;
      const double down = loss_fn(false);
      w = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: loss is not finite near '" + p->name + "'");
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > result.max_relative_error || result.worst_index < 0) {
        result = {std::max(rel, result.max_relative_error), p->name, i, a, numeric};
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  return result;
}

inline double grad_check(const std::function<double(bool)>& loss_fn,
                         std::span<ParamState<double>* const> params, double eps = 1e-5) {
  return grad_check_detailed(loss_fn, params, eps).max_relative_error;
}

}  // namespace scan
