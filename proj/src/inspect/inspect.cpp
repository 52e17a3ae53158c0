#include "cflow/inspect/inspect.hpp"

#include <algorithm>
#include <cmath>

#include "cflow/data/images.hpp"
#include "cflow/errors.hpp"
#include "cflow/training/config_text.hpp"

namespace cflow {

Tensor latent_to_image(const FlowModel& model, const Tensor& z) {
  if (z.cols() != model.dims())
    throw ContractViolation("latent has " + std::to_string(z.cols()) + " columns, model has " + std::to_string(model.dims()));
  const auto& map = model.latent_to_input();
  Tensor out = Tensor::matrix(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r)
    for (std::size_t k = 0; k < map.size(); ++k) out.at(r, map[k]) = z.at(r, k);
  return out;
}

Tensor latent_image(const FlowModel& model, const Tensor& pixels, std::size_t noise_samples, BnMode mode,
                    std::uint64_t seed, double alpha) {
  if (noise_samples == 0) throw ConfigError("latent image needs at least one noise sample");
  if (pixels.cols() != model.dims())
    throw InputError("image has " + std::to_string(pixels.cols()) + " values, model expects " + std::to_string(model.dims()));
  const std::size_t n = pixels.rows();
  std::vector<Pcg32> streams;
  for (std::size_t i = 0; i < n; ++i) streams.emplace_back(seed, i);
  Tensor sum = Tensor::matrix(n, model.dims());
  Tensor noise = Tensor::matrix(n, model.dims());
  for (std::size_t k = 0; k < noise_samples; ++k) {
    for (std::size_t i = 0; i < n; ++i) streams[i].fill_uniform(noise.row(i));
    const Tensor image = latent_to_image(model, model.latent(dequantize(pixels, noise, alpha).values, mode));
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += image[j];
  }
  for (auto& v : sum.data()) v /= static_cast<double>(noise_samples);
  return sum;
}

std::vector<LayerTrace> coupling_trace(const FlowModel& model, const Tensor& x) {
  if (x.rows() != 1 || x.cols() != model.dims())
    throw ContractViolation("coupling trace takes one example of " + std::to_string(model.dims()) + " values");
  Tape tape;
  ParamBinder bind(tape, model.params());
  const auto pass = model.to_latent(bind, tape.constant(x), BnMode::kEval, true);

  // Input positions of each factored piece.
  std::vector<std::vector<std::size_t>> piece_positions;
  std::size_t offset = 0;
  for (Var piece : pass.factored) {
    const std::size_t size = tape.value(piece).cols();
    piece_positions.emplace_back(model.latent_to_input().begin() + static_cast<std::ptrdiff_t>(offset),
                                 model.latent_to_input().begin() + static_cast<std::ptrdiff_t>(offset + size));
    offset += size;
  }

  std::vector<LayerTrace> traces;
  for (const auto& rec : pass.couplings) {
    const auto& layer = std::get<CouplingLayer>(model.layers()[rec.layer]);
    const auto& active = model.active_to_input(rec.layer);
    LayerTrace tr;
    tr.layer = rec.layer;
    tr.coupling = traces.size();
    tr.kind = layer.mask().kind;
    tr.activation = Tensor::matrix(1, model.dims());
    tr.s = Tensor::matrix(1, model.dims());
    tr.t = Tensor::matrix(1, model.dims());
    tr.predicted.assign(model.dims(), false);
    for (std::size_t p = 0; p < rec.factored_before; ++p) {
      const Tensor& v = tape.value(pass.factored[p]);
      for (std::size_t k = 0; k < v.cols(); ++k) tr.activation[piece_positions[p][k]] = v[k];
    }
    const Tensor& y = tape.value(rec.output);
    for (std::size_t k = 0; k < active.size(); ++k) tr.activation[active[k]] = y[k];
    const Tensor& s = tape.value(rec.s);
    const Tensor& t = tape.value(rec.t);
    const auto& change = *layer.change_indices();
    for (std::size_t k = 0; k < change.size(); ++k) {
      const std::size_t pos = active[change[k]];
      tr.s[pos] = s[k];
      tr.t[pos] = t[k];
      tr.predicted[pos] = true;
    }
    traces.push_back(std::move(tr));
  }
  return traces;
}

std::vector<std::size_t> region_latent_indices(const FlowModel& model, const std::vector<bool>& region) {
  const ImageShape& shape = model.input_shape();
  if (region.size() != shape.h * shape.w)
    throw ContractViolation("region has " + std::to_string(region.size()) + " pixels, image is " +
                            std::to_string(shape.h) + "x" + std::to_string(shape.w));
  std::vector<bool> selected(shape.volume(), false);
  for (std::size_t c = 0; c < shape.c; ++c)
    for (std::size_t i = 0; i < shape.h; ++i)
      for (std::size_t j = 0; j < shape.w; ++j) selected[shape.index(c, i, j)] = region[i * shape.w + j];
  std::vector<std::size_t> out;
  const auto& map = model.latent_to_input();
  for (std::size_t k = 0; k < map.size(); ++k)
    if (selected[map[k]]) out.push_back(k);
  return out;
}

Tensor resample_latent_region(const FlowModel& model, const Tensor& x, const std::vector<bool>& region,
                              std::uint64_t seed) {
  if (x.rows() != 1) throw ContractViolation("resampling takes a single example");
  Tensor z = model.latent(x, BnMode::kEval);
  Pcg32 rng(seed, 0x2e5a);
  for (std::size_t k : region_latent_indices(model, region)) z[k] = rng.normal();
  return model.to_data(z);
}

std::vector<bool> square_region(const ImageShape& shape, std::size_t top, std::size_t left, std::size_t size) {
  if (top + size > shape.h || left + size > shape.w)
    throw ConfigError("region " + std::to_string(size) + "x" + std::to_string(size) + " at (" + std::to_string(top) +
                      "," + std::to_string(left) + ") does not fit in " + shape.to_string());
  std::vector<bool> region(shape.h * shape.w, false);
  for (std::size_t i = top; i < top + size; ++i)
    for (std::size_t j = left; j < left + size; ++j) region[i * shape.w + j] = true;
  return region;
}

Canvas channel_grid(std::span<const double> image, const ImageShape& shape) {
  if (image.size() != shape.volume()) throw ContractViolation("image size does not match " + shape.to_string());
  const auto per_row = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(shape.c))));
  const std::size_t grid_rows = (shape.c + per_row - 1) / per_row;
  Canvas canvas{grid_rows * shape.h, per_row * shape.w, {}};
  canvas.values.assign(canvas.height * canvas.width, 0.0);
  for (std::size_t c = 0; c < shape.c; ++c) {
    const std::size_t top = (c / per_row) * shape.h, left = (c % per_row) * shape.w;
    for (std::size_t i = 0; i < shape.h; ++i)
      for (std::size_t j = 0; j < shape.w; ++j)
        canvas.values[(top + i) * canvas.width + left + j] = image[shape.index(c, i, j)];
  }
  return canvas;
}

std::vector<std::uint8_t> encode_pnm(std::span<const double> image, const ImageShape& shape, bool color,
                                     double* min_out, double* max_out) {
  if (image.size() != shape.volume()) throw ContractViolation("image size does not match " + shape.to_string());
  if (color && shape.c != 3) throw ContractViolation("color output needs 3 channels, got " + shape.to_string());
  const auto [lo_it, hi_it] = std::minmax_element(image.begin(), image.end());
  const double lo = *lo_it, hi = *hi_it;
  if (min_out) *min_out = lo;
  if (max_out) *max_out = hi;
  auto level = [lo, hi](double v) -> std::uint8_t {
    if (hi == lo) return 0;
    return static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo)));
  };
  std::string header;
  std::vector<std::uint8_t> body;
  if (color) {
    header = "P6\n" + std::to_string(shape.w) + " " + std::to_string(shape.h) + "\n255\n";
    for (std::size_t i = 0; i < shape.h; ++i)
      for (std::size_t j = 0; j < shape.w; ++j)
        for (std::size_t c = 0; c < 3; ++c) body.push_back(level(image[shape.index(c, i, j)]));
  } else {
    const Canvas canvas = channel_grid(image, shape);
    header = "P5\n" + std::to_string(canvas.width) + " " + std::to_string(canvas.height) + "\n255\n";
    for (double v : canvas.values) body.push_back(level(v));
  }
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

NormalizedImage write_pnm(const std::filesystem::path& path, std::span<const double> image, const ImageShape& shape,
                          bool color) {
  NormalizedImage info{path.filename().string(), 0.0, 0.0};
  write_file_atomic(path, encode_pnm(image, shape, color, &info.min, &info.max));
  return info;
}

void write_image_sidecar(const std::filesystem::path& path, const std::vector<NormalizedImage>& images) {
  std::string text = "file,min,max\n";
  for (const auto& im : images) text += im.file + "," + format_double(im.min) + "," + format_double(im.max) + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace cflow
