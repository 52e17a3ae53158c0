#pragma once

#include "cflow/numerics/rng.hpp"
#include "cflow/numerics/tensor.hpp"

namespace cflow {

inline constexpr double kDefaultLogitAlpha = 0.05;

/// A batch moved into the flow's continuous domain. `offset` (N x 1) is the
/// log-determinant of the map from dequantized pixels (in [0, 256)) to
/// `values`, so log p(pixels + noise) = flow log p(values) + offset.
struct Dequantized {
  Tensor values;  // N x D, logit space
  Tensor offset;  // N x 1
};

/// u = (x + noise) / 256; every pixel must be an integer in [0, 255] and every
/// noise value in [0, 1).
Tensor uniform_dequantize(const Tensor& pixels, const Tensor& noise);

/// v = logit(alpha + (1 - 2 alpha) u), with offset per dimension
/// log(1 - 2 alpha) - log w - log(1 - w) - log 256.
Dequantized logit_preprocess(const Tensor& u, double alpha = kDefaultLogitAlpha);

Dequantized dequantize(const Tensor& pixels, const Tensor& noise, double alpha = kDefaultLogitAlpha);
/// Draws the noise from `rng` in row-major order.
Dequantized dequantize(const Tensor& pixels, Pcg32& rng, double alpha = kDefaultLogitAlpha);

/// Inverse of the logit map back to pixel intensities in [0, 256).
Tensor logit_to_pixels(const Tensor& values, double alpha = kDefaultLogitAlpha);

}  // namespace cflow
