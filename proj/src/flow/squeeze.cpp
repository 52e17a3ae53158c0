#include "cflow/flow/squeeze.hpp"

#include "cflow/errors.hpp"

namespace cflow {

ImageShape squeezed_shape(const ImageShape& shape) {
  if (shape.h % 2 != 0 || shape.w % 2 != 0)
    throw ConfigError("squeeze needs even height and width, got " + shape.to_string());
  return ImageShape{4 * shape.c, shape.h / 2, shape.w / 2};
}

std::vector<std::size_t> squeeze_permutation(const ImageShape& shape) {
  const ImageShape out = squeezed_shape(shape);
  std::vector<std::size_t> perm(shape.volume());
  for (std::size_t c = 0; c < shape.c; ++c)
    for (std::size_t o = 0; o < 4; ++o) {
      const std::size_t di = o / 2, dj = o % 2;
      for (std::size_t i = 0; i < out.h; ++i)
        for (std::size_t j = 0; j < out.w; ++j)
          perm[out.index(4 * c + o, i, j)] = shape.index(c, 2 * i + di, 2 * j + dj);
    }
  return perm;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
  return inv;
}

namespace {

Tensor permute_columns(const Tensor& batch, const std::vector<std::size_t>& perm) {
  if (batch.cols() != perm.size())
    throw ContractViolation("batch has " + std::to_string(batch.cols()) + " columns, shape needs " +
                            std::to_string(perm.size()));
  Tensor out = Tensor::matrix(batch.rows(), batch.cols());
  for (std::size_t r = 0; r < batch.rows(); ++r)
    for (std::size_t k = 0; k < perm.size(); ++k) out.at(r, k) = batch.at(r, perm[k]);
  return out;
}

}  // namespace

Tensor squeeze(const Tensor& batch, const ImageShape& shape) {
  return permute_columns(batch, squeeze_permutation(shape));
}

Tensor unsqueeze(const Tensor& batch, const ImageShape& shape) {
  return permute_columns(batch, invert_permutation(squeeze_permutation(shape)));
}

}  // namespace cflow
