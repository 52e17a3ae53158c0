#include "cflow/numerics/adam.hpp"

#include <cmath>

#include "cflow/errors.hpp"

namespace cflow {

AdamState make_adam_state(const ParameterSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.value.shape(), 0.0);
    s.second_moment.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adam_step(ParameterSet& params, AdamState& state, const AdamHyper& hyper) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ContractViolation("adam_step: optimizer state does not match parameter count");
  for (std::size_t id = 0; id < params.size(); ++id) {
    const auto& p = params[id];
    if (p.grad.size() != p.value.size() || state.first_moment[id].size() != p.value.size())
      throw ContractViolation("adam_step: shape mismatch for parameter '" + p.name + "'");
    if (!p.grad.all_finite()) throw NumericError("adam_step: non-finite gradient for parameter '" + p.name + "'");
  }

  state.timestep += 1;
  const double t = static_cast<double>(state.timestep);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);

  for (std::size_t id = 0; id < params.size(); ++id) {
    auto& p = params[id];
    auto& m = state.first_moment[id];
    auto& v = state.second_moment[id];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      if (hyper.weight_decay != 0.0) p.value[i] -= hyper.learning_rate * hyper.weight_decay * p.value[i];
      p.value[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

}  // namespace cflow
