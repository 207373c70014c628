// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mmfuse {

/// Outcome of comparing one parameter group's analytic gradient with a
/// numeric one.
struct GradReport {
  std::string parameter_name;
  double max_relative_error = 0.0;
  std::size_t num_entries_checked = 0;
  bool pass = false;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
/// Throws NumericError naming the coordinate when f is not finite.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h);

/// max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|); pass iff <= tol.
GradReport check_gradients(std::span<const double> analytic, std::span<const double> numeric,
                           double tol, std::string parameter_name = {});

/// Folds `next` into `acc`, keeping the worst error across seeds.
void merge_report(GradReport& acc, const GradReport& next);

}  // namespace mmfuse
