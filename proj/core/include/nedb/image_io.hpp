#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nedb/morphology.hpp"

namespace nedb {

/// 8-bit interleaved image; 3 channels are stored in RGB order, 1 channel is
/// grayscale.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int ch, std::uint8_t fill = 0)
      : width(w), height(h), channels(ch), pixels(static_cast<std::size_t>(w) * h * ch, fill) {}

  std::uint8_t& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch]; }
  std::uint8_t at(int r, int c, int ch) const {
    return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  bool operator==(const Image&) const = default;
};

/// Malformed portable-anymap data. The message names the byte offset.
class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary P6 (3 channels) or P5 (1 channel), maxval 255.
std::vector<std::uint8_t> encode_pnm(const Image& image);
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& image);

/// P5 mask; values >= 128 are foreground.
BinaryMask read_mask(const std::string& path);
/// Writes 0/255 P5.
void write_mask(const std::string& path, const BinaryMask& mask);

BinaryMask mask_from_gray(const Image& gray);
Image gray_from_mask(const BinaryMask& mask);

}  // namespace nedb
