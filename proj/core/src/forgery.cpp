#include "nedb/forgery.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <stdexcept>

#include "nedb/filters.hpp"

namespace nedb {
namespace {

// Bilinear sample with zero outside the canvas.
template <typename Get>
double sample(double x, double y, int width, int height, Get&& get) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const double w = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
      if (w == 0.0) continue;
      const int xx = x0 + dx, yy = y0 + dy;
      if (xx < 0 || yy < 0 || xx >= width || yy >= height) continue;
      acc += w * get(yy, xx);
    }
  }
  return acc;
}

// Bilinear sample of an image with coordinates clamped to the canvas.
double sample_clamped(const Image& im, double x, double y, int ch) {
  x = std::clamp(x, 0.0, im.width - 1.0);
  y = std::clamp(y, 0.0, im.height - 1.0);
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, im.width - 1), y1 = std::min(y0 + 1, im.height - 1);
  const double ax = x - x0, ay = y - y0;
  const double top = im.at(y0, x0, ch) * (1 - ax) + im.at(y0, x1, ch) * ax;
  const double bottom = im.at(y1, x0, ch) * (1 - ax) + im.at(y1, x1, ch) * ax;
  return top * (1 - ay) + bottom * ay;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)); }

}  // namespace

std::string_view to_string(ForgeryType t) { return t == ForgeryType::kCopyMove ? "copy-move" : "splice"; }

std::pair<double, double> mask_center(const BinaryMask& mask) {
  int r0 = mask.height, r1 = -1, c0 = mask.width, c1 = -1;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) throw std::invalid_argument("object mask is empty");
  return {(c0 + c1) / 2.0, (r0 + r1) / 2.0};
}

ForgeryResult generate_forgery(const Image& source, const BinaryMask& object, const Image& destination,
                               const ForgeryParams& params) {
  if (source.channels != 3 || destination.channels != 3) throw std::invalid_argument("forgery images must be RGB");
  if (object.height != source.height || object.width != source.width) {
    throw std::invalid_argument(fmt::format("object mask {}x{} does not match source {}x{}", object.width,
                                            object.height, source.width, source.height));
  }
  if (!(params.scale > 0.0)) throw std::invalid_argument("forgery scale must be positive");
  const auto [cx, cy] = mask_center(object);

  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  ForgeryResult out{destination, BinaryMask(destination.height, destination.width), 0};
  for (int r = 0; r < destination.height; ++r) {
    for (int c = 0; c < destination.width; ++c) {
      // Inverse map: undo rotation (counter-clockwise on screen) and scale.
      const double dx = c - params.paste_x, dy = r - params.paste_y;
      const double sx = (cos_t * dx - sin_t * dy) / params.scale + cx;
      const double sy = (sin_t * dx + cos_t * dy) / params.scale + cy;
      const double alpha = sample(sx, sy, object.width, object.height,
                                  [&](int yy, int xx) { return object.at(yy, xx) ? 1.0 : 0.0; });
      if (alpha < 0.5) continue;
      out.mask.set(r, c, true);
      ++out.pasted_pixels;
      for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = to_byte(sample_clamped(source, sx, sy, ch));
    }
  }
  if (out.pasted_pixels == 0) throw std::invalid_argument("pasted object falls entirely outside the destination");

  if (params.blur_sigma > 0.0) {
    const Image blurred = gaussian_blur(out.image, params.blur_sigma);
    const BinaryMask band = edge_gt(out.mask, StructuringElement::make(ElementShape::kRect, 3));
    for (int r = 0; r < band.height; ++r) {
      for (int c = 0; c < band.width; ++c) {
        if (!band.at(r, c)) continue;
        for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = blurred.at(r, c, ch);
      }
    }
  }
  return out;
}

ForgeryParams sample_forgery_params(std::mt19937_64& rng, const ForgeryRanges& ranges, const BinaryMask& object,
                                    int width, int height, ForgeryType type) {
  (void)mask_center(object);  // rejects an empty mask up front
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ForgeryParams p;
  p.type = type;
  p.rotation_deg = (2.0 * unit(rng) - 1.0) * ranges.max_rotation_deg;
  p.scale = ranges.min_scale + unit(rng) * (ranges.max_scale - ranges.min_scale);
  const double mx = 0.2 * width, my = 0.2 * height;
  p.paste_x = mx + unit(rng) * (width - 1 - 2 * mx);
  p.paste_y = my + unit(rng) * (height - 1 - 2 * my);
  p.blur_sigma = unit(rng) * ranges.max_blur_sigma;
  return p;
}

SyntheticSource synthesize_source(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticSource s;
  s.image = Image(size, size, 3);
  std::vector<double> buf(static_cast<std::size_t>(size) * size * 3);

  // Smooth background: base color plus a linear gradient per channel.
  for (int ch = 0; ch < 3; ++ch) {
    const double base = 60 + 120 * unit(rng);
    const double gx = (unit(rng) - 0.5) * 80, gy = (unit(rng) - 0.5) * 80;
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        buf[(static_cast<std::size_t>(r) * size + c) * 3 + ch] =
            base + gx * c / size + gy * r / size;
      }
    }
  }
  // A few flat shapes.
  const int shapes = 2 + static_cast<int>(unit(rng) * 3);
  for (int k = 0; k < shapes; ++k) {
    const double x0 = unit(rng) * size, y0 = unit(rng) * size;
    const double w = (0.1 + 0.3 * unit(rng)) * size, h = (0.1 + 0.3 * unit(rng)) * size;
    const double color[3] = {40 + 180 * unit(rng), 40 + 180 * unit(rng), 40 + 180 * unit(rng)};
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        if (std::abs(c - x0) > w / 2 || std::abs(r - y0) > h / 2) continue;
        for (int ch = 0; ch < 3; ++ch) buf[(static_cast<std::size_t>(r) * size + c) * 3 + ch] = color[ch];
      }
    }
  }
  // Sensor-like noise of an image-specific strength.
  s.noise_sigma = 2.0 + 10.0 * unit(rng);
  std::normal_distribution<double> noise(0.0, s.noise_sigma);
  for (std::size_t i = 0; i < buf.size(); ++i) s.image.pixels[i] = to_byte(buf[i] + noise(rng));

  // Object: ellipse or convex-ish polygon around a random center.
  s.object = BinaryMask(size, size);
  const double ox = (0.3 + 0.4 * unit(rng)) * size, oy = (0.3 + 0.4 * unit(rng)) * size;
  const double ra = (0.12 + 0.12 * unit(rng)) * size, rb = (0.12 + 0.12 * unit(rng)) * size;
  if (unit(rng) < 0.5) {
    const double phi = unit(rng) * std::numbers::pi;
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double dx = c - ox, dy = r - oy;
        const double u = (std::cos(phi) * dx + std::sin(phi) * dy) / ra;
        const double v = (-std::sin(phi) * dx + std::cos(phi) * dy) / rb;
        if (u * u + v * v <= 1.0) s.object.set(r, c, true);
      }
    }
  } else {
    const int vertices = 5 + static_cast<int>(unit(rng) * 4);
    std::vector<double> radius(static_cast<std::size_t>(vertices));
    for (auto& v : radius) v = (0.6 + 0.4 * unit(rng)) * std::max(ra, rb);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double dx = c - ox, dy = r - oy;
        double a = std::atan2(dy, dx);
        if (a < 0) a += 2 * std::numbers::pi;
        const double pos = a / (2 * std::numbers::pi) * vertices;
        const int i0 = static_cast<int>(pos) % vertices;
        const int i1 = (i0 + 1) % vertices;
        const double t = pos - std::floor(pos);
        const double limit = radius[static_cast<std::size_t>(i0)] * (1 - t) + radius[static_cast<std::size_t>(i1)] * t;
        if (std::hypot(dx, dy) <= limit) s.object.set(r, c, true);
      }
    }
  }
  return s;
}

}  // namespace nedb
