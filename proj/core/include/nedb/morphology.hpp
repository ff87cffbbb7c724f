#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nedb {

enum class ElementShape { kEllipse, kRect, kCross };

std::string_view to_string(ElementShape shape);
ElementShape parse_element_shape(std::string_view text);

/// Boolean k x k footprint, k odd, anchored at its center.
///
/// The ellipse footprint follows the row-span rule of the common vision
/// toolkits: with r = k/2 (integer), row i spans columns
/// c +- round(r * sqrt(1 - ((i - r)/r)^2)). This yields the cross for k=3 and
/// rows 00100/11111/11111/11111/00100 for k=5.
struct StructuringElement {
  ElementShape shape = ElementShape::kEllipse;
  int size = 5;
  std::vector<std::uint8_t> footprint;

  static StructuringElement make(ElementShape shape, int size);
  bool at(int row, int col) const { return footprint[static_cast<std::size_t>(row * size + col)] != 0; }
  /// Point reflection through the anchor.
  StructuringElement reflected() const;
  std::size_t count() const;
};

/// Row-major H x W boolean mask.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w, bool value = false)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), value ? 1 : 0) {}

  bool at(int r, int c) const { return bits[static_cast<std::size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool v) { bits[static_cast<std::size_t>(r) * width + c] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask&) const = default;
};

/// Pixels outside the canvas count as background for both operations.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);

BinaryMask complement(const BinaryMask& mask);
/// a AND NOT b
BinaryMask set_difference(const BinaryMask& a, const BinaryMask& b);

/// Manipulation-edge band: dilate(mask) minus erode(mask).
BinaryMask edge_gt(const BinaryMask& mask, const StructuringElement& se);

/// Default edge element: 5x5 ellipse.
StructuringElement default_edge_element();

}  // namespace nedb
