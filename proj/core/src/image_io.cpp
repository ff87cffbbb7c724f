#include "nedb/image_io.hpp"

#include <cctype>
#include <fmt/format.h>
#include <fstream>
#include <iterator>

namespace nedb {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  int read_int(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw ImageFormatError(fmt::format("byte {}: {} is too large", start, what));
      ++pos_;
    }
    if (pos_ == start) throw ImageFormatError(fmt::format("byte {}: expected {}", start, what));
    return static_cast<int>(value);
  }

  void skip_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ImageFormatError(fmt::format("byte {}: expected whitespace before pixel data", pos_));
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument(fmt::format("cannot encode {}-channel image", image.channels));
  }
  const std::string header =
      fmt::format("{}\n{} {}\n255\n", image.channels == 3 ? "P6" : "P5", image.width, image.height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ImageFormatError("byte 0: bad magic number, expected P5 or P6");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader reader(bytes);
  const int width = reader.read_int("width");
  const int height = reader.read_int("height");
  const std::size_t maxval_pos = reader.pos();
  const int maxval = reader.read_int("maxval");
  if (maxval != 255) throw ImageFormatError(fmt::format("byte {}: only maxval 255 is supported", maxval_pos));
  reader.skip_single_space();
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - reader.pos() < need) {
    throw ImageFormatError(fmt::format("byte {}: pixel data truncated, need {} bytes, have {}", reader.pos(), need,
                                       bytes.size() - reader.pos()));
  }
  Image img(width, height, channels);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), need, img.pixels.begin());
  return img;
}

Image read_image(const std::string& path) {
  try {
    return decode_pnm(slurp(path));
  } catch (const ImageFormatError& e) {
    throw ImageFormatError(path + ": " + e.what());
  }
}

void write_image(const std::string& path, const Image& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

BinaryMask mask_from_gray(const Image& gray) {
  if (gray.channels != 1) throw ImageFormatError("mask must be a single-channel (P5) image");
  BinaryMask m(gray.height, gray.width);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = gray.pixels[i] >= 128 ? 1 : 0;
  return m;
}

Image gray_from_mask(const BinaryMask& mask) {
  Image img(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) img.pixels[i] = mask.bits[i] ? 255 : 0;
  return img;
}

BinaryMask read_mask(const std::string& path) { return mask_from_gray(read_image(path)); }

void write_mask(const std::string& path, const BinaryMask& mask) { write_image(path, gray_from_mask(mask)); }

}  // namespace nedb
