#include "nedb/morphology.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace nedb {
namespace {

struct Offset {
  int dr, dc;
};

std::vector<Offset> offsets(const StructuringElement& se) {
  std::vector<Offset> out;
  const int a = se.size / 2;
  for (int r = 0; r < se.size; ++r) {
    for (int c = 0; c < se.size; ++c) {
      if (se.at(r, c)) out.push_back({r - a, c - a});
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(ElementShape shape) {
  switch (shape) {
    case ElementShape::kEllipse: return "ellipse";
    case ElementShape::kRect: return "rect";
    case ElementShape::kCross: return "cross";
  }
  return "?";
}

ElementShape parse_element_shape(std::string_view text) {
  if (text == "ellipse" || text == "ELLIPSE") return ElementShape::kEllipse;
  if (text == "rect" || text == "RECT") return ElementShape::kRect;
  if (text == "cross" || text == "CROSS") return ElementShape::kCross;
  throw std::invalid_argument(fmt::format("unknown structuring element shape '{}'", text));
}

StructuringElement StructuringElement::make(ElementShape shape, int size) {
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument(fmt::format("structuring element size must be odd, got {}", size));
  }
  StructuringElement se{shape, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size), 0)};
  const int r = size / 2;
  for (int i = 0; i < size; ++i) {
    int j1 = 0, j2 = 0;  // [j1, j2)
    if (shape == ElementShape::kRect || (shape == ElementShape::kCross && i == r)) {
      j2 = size;
    } else if (shape == ElementShape::kCross) {
      j1 = r;
      j2 = r + 1;
    } else {
      const int dy = i - r;
      const double span = r == 0 ? 0.0 : r * std::sqrt(static_cast<double>(r * r - dy * dy) / (r * r));
      const int dx = static_cast<int>(std::nearbyint(span));
      j1 = std::max(r - dx, 0);
      j2 = std::min(r + dx + 1, size);
    }
    for (int j = j1; j < j2; ++j) se.footprint[static_cast<std::size_t>(i * size + j)] = 1;
  }
  return se;
}

StructuringElement StructuringElement::reflected() const {
  StructuringElement out = *this;
  const std::size_t n = footprint.size();
  for (std::size_t i = 0; i < n; ++i) out.footprint[i] = footprint[n - 1 - i];
  return out;
}

std::size_t StructuringElement::count() const {
  std::size_t n = 0;
  for (auto b : footprint) n += b;
  return n;
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b;
  return n;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
  // out(p) = OR over footprint offsets o of mask(p - o)
  const auto offs = offsets(se);
  BinaryMask out(mask.height, mask.width);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      for (const auto& o : offs) {
        const int rr = r - o.dr, cc = c - o.dc;
        if (rr >= 0 && rr < mask.height && cc >= 0 && cc < mask.width && mask.at(rr, cc)) {
          out.set(r, c, true);
          break;
        }
      }
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
  // out(p) = AND over footprint offsets o of mask(p + o); outside is false
  const auto offs = offsets(se);
  BinaryMask out(mask.height, mask.width);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      bool keep = true;
      for (const auto& o : offs) {
        const int rr = r + o.dr, cc = c + o.dc;
        if (rr < 0 || rr >= mask.height || cc < 0 || cc >= mask.width || !mask.at(rr, cc)) {
          keep = false;
          break;
        }
      }
      out.set(r, c, keep);
    }
  }
  return out;
}

BinaryMask complement(const BinaryMask& mask) {
  BinaryMask out = mask;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

BinaryMask set_difference(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) throw std::invalid_argument("set_difference: extent mismatch");
  BinaryMask out = a;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (a.bits[i] && !b.bits[i]) ? 1 : 0;
  return out;
}

BinaryMask edge_gt(const BinaryMask& mask, const StructuringElement& se) {
  return set_difference(dilate(mask, se), erode(mask, se));
}

StructuringElement default_edge_element() { return StructuringElement::make(ElementShape::kEllipse, 5); }

}  // namespace nedb
