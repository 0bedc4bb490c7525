#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "julesz/tensor.hpp"

namespace julesz {

struct GradCheckReport {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares the autodiff gradient of a scalar-valued `f` at each input against
/// central differences of width `step`.
///
/// The relative error for one element is |a - n| / max(|a|, |n|, floor); the
/// floor keeps elements whose true derivative is ~0 from reporting noise as
/// error. Throws NumericError if `f` produces a non-finite value.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& inputs, double step, double tol,
                           double floor = 1e-6);

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double tol, double floor = 1e-6);

}  // namespace julesz
