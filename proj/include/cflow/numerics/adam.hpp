#pragma once

#include <cstdint>
#include <vector>

#include "cflow/numerics/parameter.hpp"

namespace cflow {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
};

struct AdamState {
  std::uint64_t timestep = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  bool operator==(const AdamState&) const = default;
};

/// Zeroed moments shaped like `params`.
AdamState make_adam_state(const ParameterSet& params);

/// One Adam step using each parameter's accumulated grad. If any gradient is
/// non-finite nothing is modified and a NumericError names the parameter.
void adam_step(ParameterSet& params, AdamState& state, const AdamHyper& hyper);

}  // namespace cflow
