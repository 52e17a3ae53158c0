#include "cflow/numerics/autodiff.hpp"

#include "cflow/errors.hpp"

namespace cflow {

namespace {

Var run_checked(const Program& program, Tape& tape, ParameterSet& params, Var input) {
  Var out = program(tape, params, input);
  if (tape.value(out).size() != 1)
    throw ContractViolation("program output must be scalar, got shape " + shape_to_string(tape.value(out).shape()));
  return out;
}

}  // namespace

ValueAndGrad evaluate_and_grad(const Program& program, ParameterSet& params, const Tensor& input) {
  params.zero_grad();
  Tape tape;
  Var in = tape.variable(input);
  Var out = run_checked(program, tape, params, in);
  tape.backward(out);

  ValueAndGrad result;
  result.value = tape.value(out)[0];
  result.gradients.reserve(params.size());
  for (const auto& p : params) result.gradients.push_back(p.grad);
  result.input_gradient = tape.grad(in).reshaped(input.shape());
  return result;
}

double evaluate(const Program& program, ParameterSet& params, const Tensor& input) {
  Tape tape;
  Var in = tape.constant(input);
  return tape.value(run_checked(program, tape, params, in))[0];
}

std::vector<Tensor> finite_difference_gradients(const Program& program, ParameterSet& params, const Tensor& input,
                                                double h) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    Tensor g(p.value.shape(), 0.0);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate(program, params, input);
      p.value[i] = saved - h;
      const double down = evaluate(program, params, input);
      p.value[i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

Tensor finite_difference_input_gradient(const Program& program, ParameterSet& params, const Tensor& input, double h) {
  Tensor x = input;
  Tensor g(input.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = evaluate(program, params, x);
    x[i] = saved - h;
    const double down = evaluate(program, params, x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace cflow
