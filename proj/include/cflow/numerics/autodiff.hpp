#pragma once

#include <functional>
#include <vector>

#include "cflow/numerics/parameter.hpp"
#include "cflow/numerics/tape.hpp"

namespace cflow {

/// A differentiable program: records its computation on the tape and returns
/// a 1x1 result.
using Program = std::function<Var(Tape&, ParameterSet&, Var input)>;

struct ValueAndGrad {
  double value = 0.0;
  std::vector<Tensor> gradients;  // indexed by ParamId
  Tensor input_gradient;
};

/// Runs `program` on a fresh tape and returns its value with the exact
/// reverse-mode gradients. Parameter grads are reset first.
ValueAndGrad evaluate_and_grad(const Program& program, ParameterSet& params, const Tensor& input);

/// Central finite differences of `program` w.r.t. every parameter scalar.
std::vector<Tensor> finite_difference_gradients(const Program& program, ParameterSet& params, const Tensor& input,
                                                double h = 1e-5);

/// Central finite differences w.r.t. the input tensor.
Tensor finite_difference_input_gradient(const Program& program, ParameterSet& params, const Tensor& input,
                                        double h = 1e-5);

/// Value of the program without recording gradients.
double evaluate(const Program& program, ParameterSet& params, const Tensor& input);

}  // namespace cflow
