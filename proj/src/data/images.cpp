#include "cflow/data/images.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include "cflow/numerics/rng.hpp"

namespace cflow {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (offset + 4 > bytes.size())
    throw IdxParseError(IdxParseError::Kind::kTruncated, bytes.size(),
                        std::string("truncated IDX header: ") + what + " needs bytes " + std::to_string(offset) + ".." +
                            std::to_string(offset + 3) + ", file ends at offset " + std::to_string(bytes.size()));
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected) {
  const std::uint32_t magic = read_be32(bytes, 0, "magic");
  if ((magic >> 16) != 0)
    throw IdxParseError(IdxParseError::Kind::kBadMagic, 0, "bad IDX magic " + std::to_string(magic) +
                                                               ": first two bytes must be zero");
  if (magic != expected) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "unsupported IDX type 0x%08x at offset 0 (expected 0x%08x)", magic, expected);
    throw IdxParseError(IdxParseError::Kind::kUnsupportedType, 0, buf);
  }
}

// Returns the payload span after validating its exact length.
std::span<const std::uint8_t> payload(std::span<const std::uint8_t> bytes, std::size_t header, std::size_t count) {
  if (bytes.size() < header + count)
    throw IdxParseError(IdxParseError::Kind::kTruncated, bytes.size(),
                        "truncated IDX payload: expected " + std::to_string(count) + " bytes from offset " +
                            std::to_string(header) + ", data ends at offset " + std::to_string(bytes.size()));
  if (bytes.size() > header + count)
    throw IdxParseError(IdxParseError::Kind::kTrailingBytes, header + count,
                        std::to_string(bytes.size() - header - count) + " trailing bytes after IDX payload at offset " +
                            std::to_string(header + count));
  return bytes.subspan(header, count);
}

std::uint8_t quantize(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

IdxParseError::IdxParseError(Kind kind, std::size_t offset, const std::string& detail)
    : InputError(detail), kind_(kind), offset_(offset) {}

Tensor ImageDataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t d = shape.volume();
  Tensor out = Tensor::matrix(indices.size(), d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size())
      throw ContractViolation("image index " + std::to_string(indices[r]) + " out of range for " +
                              std::to_string(size()) + " images");
    auto img = image(indices[r]);
    for (std::size_t k = 0; k < d; ++k) out.at(r, k) = img[k];
  }
  return out;
}

Tensor ImageDataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

ImageDataset ImageDataset::subset(std::span<const std::size_t> indices) const {
  ImageDataset out;
  out.shape = shape;
  out.provenance = provenance;
  for (auto i : indices) {
    auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    if (!labels.empty()) out.labels.push_back(labels.at(i));
  }
  return out;
}

ImageDataset parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kImageMagic);
  const std::size_t n = read_be32(bytes, 4, "image count");
  const std::size_t h = read_be32(bytes, 8, "row count");
  const std::size_t w = read_be32(bytes, 12, "column count");
  ImageDataset ds;
  ds.shape = ImageShape{1, h, w};
  auto body = payload(bytes, 16, n * h * w);
  ds.pixels.assign(body.begin(), body.end());
  return ds;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kLabelMagic);
  const std::size_t n = read_be32(bytes, 4, "label count");
  auto body = payload(bytes, 8, n);
  return {body.begin(), body.end()};
}

std::vector<std::uint8_t> encode_idx_images(const ImageDataset& ds) {
  if (ds.shape.c != 1) throw ContractViolation("IDX image files hold single-channel images, got " + ds.shape.to_string());
  std::vector<std::uint8_t> out;
  out.reserve(16 + ds.pixels.size());
  put_be32(out, kImageMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  put_be32(out, static_cast<std::uint32_t>(ds.shape.h));
  put_be32(out, static_cast<std::uint32_t>(ds.shape.w));
  out.insert(out.end(), ds.pixels.begin(), ds.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

ImageDataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  ImageDataset ds;
  try {
    ds = parse_idx_images(read_file_bytes(images));
  } catch (const IdxParseError& e) {
    throw IdxParseError(e.kind(), e.offset(), images.string() + ": " + e.what());
  }
  ds.provenance = images.string();
  if (labels) {
    try {
      ds.labels = parse_idx_labels(read_file_bytes(*labels));
    } catch (const IdxParseError& e) {
      throw IdxParseError(e.kind(), e.offset(), labels->string() + ": " + e.what());
    }
    if (ds.labels.size() != ds.size())
      throw InputError(labels->string() + " has " + std::to_string(ds.labels.size()) + " labels for " +
                       std::to_string(ds.size()) + " images");
  }
  return ds;
}

void write_idx(const std::filesystem::path& path, const ImageDataset& ds) {
  write_file_atomic(path, encode_idx_images(ds));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  write_file_atomic(path, encode_idx_labels(labels));
}

std::string_view synthetic_family_name(SyntheticFamily family) {
  switch (family) {
    case SyntheticFamily::kBlobs: return "blobs";
    case SyntheticFamily::kStripes: return "stripes";
    case SyntheticFamily::kPatches: return "patches";
  }
  return "unknown";
}

SyntheticFamily parse_synthetic_family(std::string_view name) {
  if (name == "blobs") return SyntheticFamily::kBlobs;
  if (name == "stripes") return SyntheticFamily::kStripes;
  if (name == "patches") return SyntheticFamily::kPatches;
  throw ConfigError("unknown synthetic family '" + std::string(name) + "' (expected blobs, stripes or patches)");
}

ImageDataset gen_synthetic(SyntheticFamily family, std::size_t n, std::size_t resolution, std::uint64_t seed) {
  if (resolution == 0 || resolution % 2 != 0)
    throw ConfigError("synthetic resolution must be even and positive, got " + std::to_string(resolution));
  if (n == 0) throw ConfigError("synthetic dataset needs at least one image");
  Pcg32 rng(seed, 0x5e70 + static_cast<std::uint64_t>(family));
  const double r = static_cast<double>(resolution);
  auto range = [&rng](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };

  ImageDataset ds;
  ds.shape = ImageShape{1, resolution, resolution};
  ds.provenance = "synthetic:" + std::string(synthetic_family_name(family)) + ":" + std::to_string(resolution) +
                  ":seed=" + std::to_string(seed);
  ds.pixels.reserve(n * resolution * resolution);
  std::vector<double> img(resolution * resolution);

  for (std::size_t k = 0; k < n; ++k) {
    switch (family) {
      case SyntheticFamily::kBlobs: {
        std::fill(img.begin(), img.end(), range(0.0, 30.0));
        const std::size_t bumps = 2 + rng.below(3);
        for (std::size_t b = 0; b < bumps; ++b) {
          const double ci = range(0.0, r), cj = range(0.0, r);
          const double sigma = range(0.12, 0.3) * r;
          const double amp = range(80.0, 220.0);
          for (std::size_t i = 0; i < resolution; ++i)
            for (std::size_t j = 0; j < resolution; ++j) {
              const double di = static_cast<double>(i) - ci, dj = static_cast<double>(j) - cj;
              img[i * resolution + j] += amp * std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            }
        }
        for (auto& v : img) v += 10.0 * rng.normal();
        break;
      }
      case SyntheticFamily::kStripes: {
        const double angle = range(0.0, std::numbers::pi);
        const double cycles = range(1.5, 4.0);
        const double phase = range(0.0, 2 * std::numbers::pi);
        const double amp = range(60.0, 127.0);
        const double ki = std::sin(angle) * 2 * std::numbers::pi * cycles / r;
        const double kj = std::cos(angle) * 2 * std::numbers::pi * cycles / r;
        for (std::size_t i = 0; i < resolution; ++i)
          for (std::size_t j = 0; j < resolution; ++j)
            img[i * resolution + j] = 128.0 + amp * std::sin(ki * static_cast<double>(i) + kj * static_cast<double>(j) + phase);
        break;
      }
      case SyntheticFamily::kPatches: {
        // Any background level, with rectangles only slightly brighter or darker:
        // flat almost everywhere, but not at the pixel values blobs put there.
        const double background = range(0.0, 230.0);
        std::fill(img.begin(), img.end(), background);
        const std::size_t rects = 1 + rng.below(3);
        for (std::size_t q = 0; q < rects; ++q) {
          const auto side_h = static_cast<std::size_t>(range(0.25, 0.75) * r);
          const auto side_w = static_cast<std::size_t>(range(0.25, 0.75) * r);
          const std::size_t top = rng.below(static_cast<std::uint32_t>(resolution - side_h + 1));
          const std::size_t left = rng.below(static_cast<std::uint32_t>(resolution - side_w + 1));
          const double level = background + range(-30.0, 30.0);
          for (std::size_t i = top; i < top + side_h; ++i)
            for (std::size_t j = left; j < left + side_w; ++j) img[i * resolution + j] = level;
        }
        break;
      }
    }
    for (double v : img) ds.pixels.push_back(quantize(v));
  }
  return ds;
}

double mean_horizontal_difference(const ImageDataset& ds) {
  const auto& s = ds.shape;
  if (s.w < 2 || ds.size() == 0) return 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    auto img = ds.image(k);
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j + 1 < s.w; ++j) {
          total += std::abs(static_cast<double>(img[s.index(c, i, j + 1)]) - static_cast<double>(img[s.index(c, i, j)]));
          ++count;
        }
  }
  return total / static_cast<double>(count);
}

IndexSplit random_split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("test fraction must be in [0, 1), got " + std::to_string(test_fraction));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Pcg32 rng(seed, 0x5b17);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
  const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * test_fraction));
  IndexSplit split;
  split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace cflow
