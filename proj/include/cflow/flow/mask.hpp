#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cflow/numerics/image_shape.hpp"

namespace cflow {

enum class MaskKind { kCheckerboard, kChannelwise, kHorizontal, kCycle };

std::string_view mask_kind_name(MaskKind kind);
MaskKind parse_mask_kind(std::string_view name);

using IndexList = std::shared_ptr<const std::vector<std::size_t>>;

/// Partition of a layer's input coordinates into the part a coupling layer
/// changes and the part its st-network reads. Coordinates in neither set pass
/// through untouched (only the cycle mask leaves such coordinates).
struct Mask {
  MaskKind kind = MaskKind::kCheckerboard;
  std::size_t phase = 0;
  ImageShape shape;
  std::vector<bool> change;
  std::vector<bool> condition;

  IndexList change_indices() const;
  IndexList condition_indices() const;
  std::size_t change_count() const;
  std::size_t condition_count() const;
};

/// checkerboard: change where (i + j + phase) is even, every channel.
/// channelwise:  second half of channels for even phase, first half for odd.
/// horizontal:   bottom half of rows for even phase, top half for odd.
/// cycle:        quadrant (phase mod 4) conditioned on quadrant (phase - 1 mod 4),
///               quadrants ordered top-left, top-right, bottom-right, bottom-left.
Mask make_mask(MaskKind kind, const ImageShape& shape, std::size_t phase);

/// Rows of the form "c=<channel>" followed by the mask pattern, 'x' for
/// change, 'o' for condition, '.' for pass-through.
std::string render_mask(const Mask& mask);

}  // namespace cflow
