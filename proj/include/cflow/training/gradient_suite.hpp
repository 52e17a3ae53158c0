#pragma once

#include <cstdint>
#include <vector>

#include "cflow/numerics/gradcheck.hpp"

namespace cflow {

/// Finite-difference checks of whole objectives on small random flows: a full
/// MLE step through train-mode batch norm on a two-scale image flow and on a
/// flat vector flow (tolerance 1e-3), and the contrastive objective with its
/// indicator held fixed (tolerance 1e-4).
std::vector<GradCheckResult> training_gradient_checks(std::uint64_t seed);

/// Primitive checks followed by the training checks.
std::vector<GradCheckResult> all_gradient_checks(std::uint64_t seed);

}  // namespace cflow
