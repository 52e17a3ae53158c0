#include "cflow/flow/mask.hpp"

#include <sstream>

#include "cflow/errors.hpp"

namespace cflow {

std::string_view mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::kCheckerboard: return "checkerboard";
    case MaskKind::kChannelwise: return "channelwise";
    case MaskKind::kHorizontal: return "horizontal";
    case MaskKind::kCycle: return "cycle";
  }
  return "?";
}

MaskKind parse_mask_kind(std::string_view name) {
  for (auto k : {MaskKind::kCheckerboard, MaskKind::kChannelwise, MaskKind::kHorizontal, MaskKind::kCycle})
    if (mask_kind_name(k) == name) return k;
  throw ConfigError("unknown mask kind '" + std::string(name) + "'");
}

namespace {

IndexList indices_of(const std::vector<bool>& bits) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(i);
  return std::make_shared<const std::vector<std::size_t>>(std::move(out));
}

// Quadrant numbering follows the cycle: 0 TL, 1 TR, 2 BR, 3 BL.
std::size_t quadrant_of(const ImageShape& s, std::size_t i, std::size_t j) {
  const bool bottom = i >= s.h / 2;
  const bool right = j >= s.w / 2;
  if (!bottom) return right ? 1 : 0;
  return right ? 2 : 3;
}

}  // namespace

IndexList Mask::change_indices() const { return indices_of(change); }
IndexList Mask::condition_indices() const { return indices_of(condition); }

std::size_t Mask::change_count() const {
  std::size_t n = 0;
  for (bool b : change) n += b;
  return n;
}

std::size_t Mask::condition_count() const {
  std::size_t n = 0;
  for (bool b : condition) n += b;
  return n;
}

Mask make_mask(MaskKind kind, const ImageShape& shape, std::size_t phase) {
  const std::string where = std::string(mask_kind_name(kind)) + " mask on " + shape.to_string();
  switch (kind) {
    case MaskKind::kCheckerboard:
      if (shape.h * shape.w < 2) throw ConfigError(where + ": needs at least two spatial positions");
      break;
    case MaskKind::kChannelwise:
      if (shape.c % 2 != 0) throw ConfigError(where + ": channel count must be even");
      break;
    case MaskKind::kHorizontal:
    case MaskKind::kCycle:
      if (shape.h % 2 != 0 || shape.w % 2 != 0) throw ConfigError(where + ": height and width must be even");
      break;
  }

  Mask m;
  m.kind = kind;
  m.phase = phase;
  m.shape = shape;
  m.change.assign(shape.volume(), false);
  m.condition.assign(shape.volume(), false);
  const bool even = phase % 2 == 0;
  const std::size_t target = phase % 4;
  const std::size_t source = (phase + 3) % 4;

  for (std::size_t ch = 0; ch < shape.c; ++ch)
    for (std::size_t i = 0; i < shape.h; ++i)
      for (std::size_t j = 0; j < shape.w; ++j) {
        const std::size_t idx = shape.index(ch, i, j);
        bool change = false;
        switch (kind) {
          case MaskKind::kCheckerboard:
            change = (i + j + phase) % 2 == 0;
            break;
          case MaskKind::kChannelwise:
            change = even ? ch >= shape.c / 2 : ch < shape.c / 2;
            break;
          case MaskKind::kHorizontal:
            change = even ? i >= shape.h / 2 : i < shape.h / 2;
            break;
          case MaskKind::kCycle: {
            const std::size_t q = quadrant_of(shape, i, j);
            m.change[idx] = q == target;
            m.condition[idx] = q == source;
            continue;
          }
        }
        m.change[idx] = change;
        m.condition[idx] = !change;
      }
  if (m.change_count() == 0 || m.change_count() == shape.volume())
    throw ConfigError(where + ": degenerate partition");
  return m;
}

std::string render_mask(const Mask& mask) {
  std::ostringstream os;
  const auto& s = mask.shape;
  os << "kind=" << mask_kind_name(mask.kind) << " phase=" << mask.phase << " shape=" << s.to_string() << "\n";
  for (std::size_t ch = 0; ch < s.c; ++ch) {
    os << "c=" << ch << "\n";
    for (std::size_t i = 0; i < s.h; ++i) {
      for (std::size_t j = 0; j < s.w; ++j) {
        const auto idx = s.index(ch, i, j);
        os << (mask.change[idx] ? 'x' : mask.condition[idx] ? 'o' : '.');
      }
      os << "\n";
    }
  }
  os << "change=";
  bool first = true;
  for (std::size_t ch = 0; ch < s.c; ++ch)
    for (std::size_t i = 0; i < s.h; ++i)
      for (std::size_t j = 0; j < s.w; ++j)
        if (mask.change[s.index(ch, i, j)]) {
          os << (first ? "{" : ",");
          if (s.c > 1) os << "(" << ch << "," << i << "," << j << ")";
          else os << "(" << i << "," << j << ")";
          first = false;
        }
  os << "}\n";
  return os.str();
}

}  // namespace cflow
