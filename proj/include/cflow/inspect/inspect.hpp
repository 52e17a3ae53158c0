#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cflow/flow/model.hpp"
#include "cflow/training/preprocess.hpp"

namespace cflow {

/// Scatters a latent-layout row back to input coordinates: every squeeze is
/// undone and the factored pieces are joined in place.
Tensor latent_to_image(const FlowModel& model, const Tensor& z);

/// Latent of each row of `pixels` (8-bit values) shown at the input shape,
/// averaged over `noise_samples` dequantization draws. Example i draws its
/// noise from stream i of `seed`. Train mode uses the batch of all rows.
Tensor latent_image(const FlowModel& model, const Tensor& pixels, std::size_t noise_samples = 40,
                    BnMode mode = BnMode::kEval, std::uint64_t seed = 0, double alpha = kDefaultLogitAlpha);

/// One coupling layer seen at the input shape. Positions the layer does not
/// change are marked in `predicted` and hold 0 in `s` and `t`.
struct LayerTrace {
  std::size_t layer = 0;
  std::size_t coupling = 0;  // position among coupling layers
  MaskKind kind = MaskKind::kCheckerboard;
  Tensor activation;  // 1 x D, layer output joined with earlier factored pieces
  Tensor s;           // 1 x D
  Tensor t;           // 1 x D
  std::vector<bool> predicted;
};

/// Eval-mode trace of a single example given in the flow's continuous domain.
std::vector<LayerTrace> coupling_trace(const FlowModel& model, const Tensor& x);

/// Latent positions holding the coordinates of every channel at the pixels
/// selected by `region` (h x w, row-major).
std::vector<std::size_t> region_latent_indices(const FlowModel& model, const std::vector<bool>& region);

/// Maps `x` (1 x D, continuous domain) to the latent, redraws the region's
/// latent coordinates from N(0, 1) and maps back.
Tensor resample_latent_region(const FlowModel& model, const Tensor& x, const std::vector<bool>& region,
                              std::uint64_t seed);

/// A square region of side `size` with its top-left corner at (top, left).
std::vector<bool> square_region(const ImageShape& shape, std::size_t top, std::size_t left, std::size_t size);

/// Grayscale canvas of channel panels side by side, ceil(sqrt(c)) per row.
struct Canvas {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major
};
Canvas channel_grid(std::span<const double> image, const ImageShape& shape);

/// Min-max normalized write. Single-channel and multi-channel images become a
/// grayscale P5 grid; pass `color` with 3 channels for a P6 file.
struct NormalizedImage {
  std::string file;
  double min = 0.0;
  double max = 0.0;
};
NormalizedImage write_pnm(const std::filesystem::path& path, std::span<const double> image, const ImageShape& shape,
                          bool color = false);
std::vector<std::uint8_t> encode_pnm(std::span<const double> image, const ImageShape& shape, bool color,
                                     double* min_out = nullptr, double* max_out = nullptr);
/// CSV `file,min,max`.
void write_image_sidecar(const std::filesystem::path& path, const std::vector<NormalizedImage>& images);

}  // namespace cflow
