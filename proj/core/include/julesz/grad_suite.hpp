#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "julesz/grad_check.hpp"
#include "julesz/tensor.hpp"

namespace julesz {

/// A scalar function of some tensors together with the point to check it at.
struct GradCase {
  std::string name;
  std::function<Tensor(const std::vector<Tensor>&)> f;
  std::vector<Tensor> inputs;
};

/// Random double-precision instances (at most 2 x 4 x 8 x 8) of every
/// differentiable layer, loss and objective, seeded.
std::vector<GradCase> gradient_suite(std::uint64_t seed = 0);

struct GradSuiteOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  double floor = 1e-5;
  std::vector<std::string> only;  // empty runs every case
};

/// Runs grad_check on every selected case. Throws std::invalid_argument for a
/// name in `only` that is not in the suite.
std::vector<GradCheckReport> run_gradient_suite(const GradSuiteOptions& options,
                                                std::uint64_t seed = 0);

}  // namespace julesz
