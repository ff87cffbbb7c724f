#include "nedb/filters.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace nedb {
namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)); }

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

std::vector<double> blur_plane(std::span<const double> plane, int height, int width, double sigma) {
  if (plane.size() != static_cast<std::size_t>(height) * width) throw std::invalid_argument("blur_plane: extent mismatch");
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(plane.size()), out(plane.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int cc = std::clamp(c + i, 0, width - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * plane[static_cast<std::size_t>(r) * width + cc];
      }
      tmp[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int rr = std::clamp(r + i, 0, height - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(rr) * width + c];
      }
      out[static_cast<std::size_t>(r) * width + c] = acc;
    }
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  Image out = image;
  const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
  std::vector<double> plane(n);
  for (int ch = 0; ch < image.channels; ++ch) {
    for (std::size_t i = 0; i < n; ++i) plane[i] = image.pixels[i * image.channels + ch];
    const auto blurred = blur_plane(plane, image.height, image.width, sigma);
    for (std::size_t i = 0; i < n; ++i) out.pixels[i * image.channels + ch] = to_byte(blurred[i]);
  }
  return out;
}

Image quantize(const Image& image, int levels) {
  if (levels < 2 || levels > 256) throw std::invalid_argument(fmt::format("quantize: levels must be in [2, 256], got {}", levels));
  Image out = image;
  for (auto& v : out.pixels) {
    const int bin = v * levels / 256;
    v = to_byte(bin * 255.0 / (levels - 1));
  }
  return out;
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (width == image.width && height == image.height) return image;
  Image out(width, height, image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = x - x0;
      for (int ch = 0; ch < image.channels; ++ch) {
        const double top = image.at(y0, x0, ch) * (1 - fx) + image.at(y0, x1, ch) * fx;
        const double bottom = image.at(y1, x0, ch) * (1 - fx) + image.at(y1, x1, ch) * fx;
        out.at(r, c, ch) = to_byte(top * (1 - fy) + bottom * fy);
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int width, int height) {
  if (width == mask.width && height == mask.height) return mask;
  BinaryMask out(height, width);
  for (int r = 0; r < height; ++r) {
    const int sr = std::min(static_cast<int>((r + 0.5) * mask.height / height), mask.height - 1);
    for (int c = 0; c < width; ++c) {
      const int sc = std::min(static_cast<int>((c + 0.5) * mask.width / width), mask.width - 1);
      out.set(r, c, mask.at(sr, sc));
    }
  }
  return out;
}

}  // namespace nedb
