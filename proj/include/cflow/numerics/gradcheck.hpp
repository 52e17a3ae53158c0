#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflow/numerics/autodiff.hpp"

namespace cflow {

struct GradCheckResult {
  std::string name;
  double relative_error = 0.0;  // worst over all parameter tensors
  double tolerance = 1e-4;
  bool passed() const { return relative_error < tolerance; }
};

/// Compares reverse-mode gradients of `program` against central finite
/// differences for every parameter.
GradCheckResult check_gradients(std::string name, const Program& program, ParameterSet& params, const Tensor& input,
                                double tolerance = 1e-4, double h = 1e-5);

/// One check per tape primitive, inputs drawn uniformly from [-2, 2]
/// (shifted to be positive where the primitive requires it).
std::vector<GradCheckResult> primitive_gradient_checks(std::uint64_t seed);

}  // namespace cflow
