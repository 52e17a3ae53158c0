#pragma once

#include <vector>

#include "cflow/flow/mask.hpp"
#include "cflow/numerics/tensor.hpp"

namespace cflow {

/// Output shape of a squeeze: c x h x w -> 4c x h/2 x w/2.
ImageShape squeezed_shape(const ImageShape& shape);

/// Gather indices realizing the squeeze: output coordinate k reads input
/// coordinate perm[k]. Output channel 4c' + o holds input channel c'
/// sub-sampled at offset o in the order (0,0), (0,1), (1,0), (1,1).
std::vector<std::size_t> squeeze_permutation(const ImageShape& shape);

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

/// Squeezes every row of a batch (N x chw) laid out in `shape`.
Tensor squeeze(const Tensor& batch, const ImageShape& shape);
Tensor unsqueeze(const Tensor& batch, const ImageShape& shape);

}  // namespace cflow
