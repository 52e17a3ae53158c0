#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace cflow {

/// Channel-major image shape; coordinate (ch, i, j) flattens to ch*h*w + i*w + j.
struct ImageShape {
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t volume() const { return c * h * w; }
  std::size_t index(std::size_t ch, std::size_t i, std::size_t j) const { return (ch * h + i) * w + j; }
  std::string to_string() const;
  bool operator==(const ImageShape&) const = default;
};

/// Parses "CxHxW".
ImageShape parse_image_shape(std::string_view text);

}  // namespace cflow
