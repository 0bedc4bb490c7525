#include "julesz/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "julesz/errors.hpp"

namespace julesz {

namespace {

double evaluate(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                const std::vector<Tensor>& inputs) {
  const double v = f(inputs).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& inputs, double step, double tol,
                           double floor) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");

  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.push_back(x.detach(true));

  auto loss = f(leaves);
  if (loss.size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  loss.backward();

  GradCheckReport report;
  report.tolerance = tol;
  std::size_t flat = 0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.size(), 0.0);
    if (leaf.has_grad()) {
      std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    }
    auto values = leaf.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate(f, leaves);
      values[i] = saved - step;
      const double down = evaluate(f, leaves);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      if (!std::isfinite(analytic[i])) throw NumericError("grad_check: non-finite gradient");
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double err = std::abs(analytic[i] - numeric) / scale;
      if (err > report.max_relative_error || flat == 0) {
        report.max_relative_error = err;
        report.worst_index = flat;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error <= tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double tol, double floor) {
  return grad_check([&f](const std::vector<Tensor>& xs) { return f(xs[0]); },
                    std::vector<Tensor>{x}, step, tol, floor);
}

}  // namespace julesz
