#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "creep/tensor.hpp"

namespace creep {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Parameter index and flat element index of the worst entry.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares taped gradients of a scalar function against central differences.
///
/// Each checked element contributes |a - n| / max(|a|, |n|, 1e-8). When
/// `stride` > 1 only every stride-th element of each parameter is perturbed
/// (always including the first), which keeps large models tractable.
inline GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& f,
                                         std::vector<Tensor<double>> params, double eps = 1e-5,
                                         std::size_t stride = 1) {
  for (auto& p : params) p.set_requires_grad();
  const auto analytic = gradients(f(), params);

  GradCheckResult result;
  NoGradGuard guard;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    const auto grad = analytic[pi].data();
    for (std::size_t i = 0; i < values.size(); i += std::max<std::size_t>(stride, 1)) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = grad[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.checked;
      if (err > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

/// Single-input form: f maps x to a scalar.
inline double finite_diff_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                                double eps = 1e-5) {
  return finite_diff_check([&] { return f(x); }, {x}, eps).max_rel_error;
}

}  // namespace creep
