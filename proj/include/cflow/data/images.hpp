#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cflow/errors.hpp"
#include "cflow/numerics/image_shape.hpp"
#include "cflow/numerics/tensor.hpp"

namespace cflow {

/// n images of one shape, stored as u8 in channel-major order per image.
struct ImageDataset {
  ImageShape shape;
  std::vector<std::uint8_t> pixels;  // n * shape.volume()
  std::vector<std::uint8_t> labels;  // empty or one per image
  std::string provenance;

  std::size_t size() const { return shape.volume() == 0 ? 0 : pixels.size() / shape.volume(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span<const std::uint8_t>(pixels).subspan(i * shape.volume(), shape.volume());
  }
  /// Pixel values as doubles, one row per selected image.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor all() const;
  ImageDataset subset(std::span<const std::size_t> indices) const;
};

/// Raised for malformed IDX bytes. `offset()` is the byte position at which
/// parsing failed.
class IdxParseError : public InputError {
 public:
  enum class Kind { kBadMagic, kUnsupportedType, kTruncated, kTrailingBytes };
  IdxParseError(Kind kind, std::size_t offset, const std::string& detail);
  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

// IDX: big-endian magic 0x00000803 (u8 images n x h x w) or 0x00000801 (u8
// labels n), big-endian u32 extents, raw payload, nothing after.
ImageDataset parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx_images(const ImageDataset& ds);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

/// Loads an image file, and a label file when given.
ImageDataset load_idx(const std::filesystem::path& images,
                      const std::optional<std::filesystem::path>& labels = std::nullopt);
void write_idx(const std::filesystem::path& path, const ImageDataset& ds);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

enum class SyntheticFamily { kBlobs, kStripes, kPatches };
std::string_view synthetic_family_name(SyntheticFamily family);
SyntheticFamily parse_synthetic_family(std::string_view name);

/// Seeded grayscale stand-ins for natural image datasets:
///   blobs:   2-4 Gaussian bumps of random position, width and brightness
///   stripes: sinusoidal gratings with random orientation, frequency and phase
///   patches: 1-3 flat rectangles of random intensity on a flat background
/// Output is 1 x resolution x resolution, a pure function of the arguments.
ImageDataset gen_synthetic(SyntheticFamily family, std::size_t n, std::size_t resolution, std::uint64_t seed);

/// Mean absolute difference between horizontally adjacent pixels.
double mean_horizontal_difference(const ImageDataset& ds);

/// Deterministic split of [0, n) into (train, test) index lists; test gets
/// round(n * test_fraction) indices.
struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
IndexSplit random_split(std::size_t n, double test_fraction, std::uint64_t seed);

}  // namespace cflow
