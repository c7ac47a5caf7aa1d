#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "specfas/tensor.hpp"

namespace specfas {

struct GradOffender {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Worst elements first, at most `GradCheckOptions::keep_worst` entries.
  std::vector<GradOffender> worst;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor), so entries
  // whose true gradient is ~0 are judged on absolute error.
  double denominator_floor = 1e-6;
  std::size_t keep_worst = 5;
  // When non-empty only these flat indices are perturbed.
  std::vector<std::size_t> indices;
};

double relative_error(double analytic, double numeric, double floor);

/// Compares the reverse-mode gradient of scalar `f` at `x` against central
/// differences. `x` is copied; the caller's tensor is not modified.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& options = {});

}  // namespace specfas
