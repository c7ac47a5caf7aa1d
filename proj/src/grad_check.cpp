#include "specfas/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specfas {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& options) {
  Tensor probe = Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);
  Tensor loss = f(probe);
  loss.backward();
  const std::vector<double> analytic = probe.grad();

  std::vector<std::size_t> indices = options.indices;
  if (indices.empty()) {
    indices.resize(x.numel());
    std::iota(indices.begin(), indices.end(), 0);
  }

  GradCheckReport report;
  std::vector<GradOffender> all;
  {
    NoGradGuard no_grad;
    Tensor work = probe.detach();
    auto values = work.mutable_data();
    for (std::size_t i : indices) {
      const double original = values[i];
      values[i] = original + options.step;
      const double up = f(work).item();
      values[i] = original - options.step;
      const double down = f(work).item();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[i], numeric, options.denominator_floor);
      all.push_back({i, analytic[i], numeric, err});
      report.max_rel_error = std::max(report.max_rel_error, err);
    }
  }
  report.checked = all.size();
  std::stable_sort(all.begin(), all.end(),
                   [](const GradOffender& a, const GradOffender& b) { return a.rel_error > b.rel_error; });
  all.resize(std::min(all.size(), options.keep_worst));
  report.worst = std::move(all);
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace specfas
