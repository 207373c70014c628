// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mmfuse/error.hpp"

namespace mmfuse {

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x,
                                     double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double plus = f(point);
    point[i] = saved - h;
    const double minus = f(point);
    point[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

GradReport check_gradients(std::span<const double> analytic, std::span<const double> numeric,
                           double tol, std::string parameter_name) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("check_gradients: length mismatch " + std::to_string(analytic.size()) +
                     " vs " + std::to_string(numeric.size()));
  }
  if (analytic.empty()) throw ShapeError("check_gradients: empty gradient vectors");
  GradReport report;
  report.parameter_name = std::move(parameter_name);
  report.num_entries_checked = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max(1e-8, std::abs(a) + std::abs(n));
    report.max_relative_error = std::max(report.max_relative_error, std::abs(a - n) / denom);
  }
  report.pass = report.max_relative_error <= tol;
  return report;
}

void merge_report(GradReport& acc, const GradReport& next) {
  if (acc.num_entries_checked == 0) {
    acc = next;
    return;
  }
  acc.max_relative_error = std::max(acc.max_relative_error, next.max_relative_error);
  acc.num_entries_checked += next.num_entries_checked;
  acc.pass = acc.pass && next.pass;
}

}  // namespace mmfuse
