#include "cflow/training/preprocess.hpp"

#include <cmath>

#include "cflow/errors.hpp"

namespace cflow {

Tensor uniform_dequantize(const Tensor& pixels, const Tensor& noise) {
  if (pixels.shape() != noise.shape())
    throw ContractViolation("dequantize: pixel shape " + shape_to_string(pixels.shape()) + " vs noise shape " +
                            shape_to_string(noise.shape()));
  Tensor u(pixels.shape());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double x = pixels[i];
    if (!(x >= 0.0 && x <= 255.0) || x != std::floor(x))
      throw InputError("pixel value " + std::to_string(x) + " at flat index " + std::to_string(i) +
                       " is not an integer in [0, 255]");
    if (!(noise[i] >= 0.0 && noise[i] < 1.0))
      throw ContractViolation("dequantization noise must lie in [0, 1), got " + std::to_string(noise[i]));
    u[i] = (x + noise[i]) / 256.0;
  }
  return u;
}

Dequantized logit_preprocess(const Tensor& u, double alpha) {
  if (!(alpha >= 0.0 && alpha < 0.5)) throw ConfigError("logit alpha must be in [0, 0.5), got " + std::to_string(alpha));
  const std::size_t n = u.rows(), d = u.cols();
  Dequantized out{Tensor::matrix(n, d), Tensor::matrix(n, 1)};
  const double per_dim = std::log1p(-2.0 * alpha) - std::log(256.0);
  for (std::size_t r = 0; r < n; ++r) {
    double off = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double w = alpha + (1.0 - 2.0 * alpha) * u.at(r, c);
      out.values.at(r, c) = std::log(w) - std::log1p(-w);
      off += per_dim - std::log(w) - std::log1p(-w);
    }
    out.offset[r] = off;
  }
  if (!out.values.all_finite() || !out.offset.all_finite())
    throw NumericError("logit preprocessing produced a non-finite value (alpha = 0 with a boundary pixel?)");
  return out;
}

Dequantized dequantize(const Tensor& pixels, const Tensor& noise, double alpha) {
  return logit_preprocess(uniform_dequantize(pixels, noise), alpha);
}

Dequantized dequantize(const Tensor& pixels, Pcg32& rng, double alpha) {
  Tensor noise(pixels.shape());
  rng.fill_uniform(noise.data());
  return dequantize(pixels, noise, alpha);
}

Tensor logit_to_pixels(const Tensor& values, double alpha) {
  Tensor out(values.shape());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = 1.0 / (1.0 + std::exp(-values[i]));
    out[i] = 256.0 * (w - alpha) / (1.0 - 2.0 * alpha);
  }
  return out;
}

}  // namespace cflow
