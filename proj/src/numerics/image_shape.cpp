#include "cflow/numerics/image_shape.hpp"

#include <charconv>
#include <vector>

#include "cflow/errors.hpp"

namespace cflow {

std::string ImageShape::to_string() const {
  return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

ImageShape parse_image_shape(std::string_view text) {
  std::vector<std::size_t> extents;
  std::size_t pos = 0;
  while (true) {
    const auto sep = text.find('x', pos);
    const auto part = text.substr(pos, sep == std::string_view::npos ? text.size() - pos : sep - pos);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || v == 0)
      throw ConfigError("shape '" + std::string(text) + "' is not of the form CxHxW with positive extents");
    extents.push_back(v);
    if (sep == std::string_view::npos) break;
    pos = sep + 1;
  }
  if (extents.size() != 3) throw ConfigError("shape '" + std::string(text) + "' is not of the form CxHxW");
  return ImageShape{extents[0], extents[1], extents[2]};
}

}  // namespace cflow
