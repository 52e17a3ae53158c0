#pragma once

#include "cflow/numerics/gradcheck.hpp"
#include "cflow/numerics/rng.hpp"
#include "cflow/numerics/tensor.hpp"

namespace cflow::testing {

inline Tensor random_tensor(Shape shape, Pcg32& rng, double half_width) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = half_width * (2.0 * rng.uniform() - 1.0);
  return t;
}

using cflow::primitive_gradient_checks;

}  // namespace cflow::testing
