#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "nedb/image_io.hpp"
#include "nedb/morphology.hpp"

namespace nedb {

enum class ForgeryType { kCopyMove, kSplice };

std::string_view to_string(ForgeryType t);

struct ForgeryParams {
  ForgeryType type = ForgeryType::kCopyMove;
  /// Counter-clockwise as displayed (rows grow downwards).
  double rotation_deg = 0.0;
  double scale = 1.0;
  /// Destination position of the object's bounding-box center.
  double paste_x = 0.0;
  double paste_y = 0.0;
  /// 0 disables the boundary blur.
  double blur_sigma = 0.0;
};

/// Sampling ranges for random forgeries.
struct ForgeryRanges {
  double max_rotation_deg = 30.0;
  double min_scale = 0.5;
  double max_scale = 1.5;
  double max_blur_sigma = 1.5;
  double splice_probability = 0.5;
};

struct ForgeryResult {
  Image image;
  BinaryMask mask;
  std::size_t pasted_pixels = 0;
};

/// Bounding-box center (x, y) of the set pixels. Throws on an empty mask.
std::pair<double, double> mask_center(const BinaryMask& mask);

/// Pastes the object of `source` (support `object`) into `destination`.
///
/// Every destination pixel is mapped back through the inverse rotation and
/// scale about the paste point; the object mask is sampled bilinearly there
/// and the pixel is pasted when that sample is >= 0.5, taking the bilinearly
/// sampled source color. With blur_sigma > 0 the composite is blurred in a
/// 3x3 band around the pasted boundary. For copy-move pass the same image as
/// source and destination.
ForgeryResult generate_forgery(const Image& source, const BinaryMask& object, const Image& destination,
                               const ForgeryParams& params);

/// Random parameters for pasting `object` into a width x height canvas. The
/// paste point keeps the object center inside the canvas.
ForgeryParams sample_forgery_params(std::mt19937_64& rng, const ForgeryRanges& ranges, const BinaryMask& object,
                                    int width, int height, ForgeryType type);

/// Procedural source material: a smooth colored scene with a few flat shapes
/// and per-image sensor-like noise, plus an object mask (ellipse or polygon)
/// covering a moderate share of the canvas.
struct SyntheticSource {
  Image image;
  BinaryMask object;
  double noise_sigma = 0.0;
};

SyntheticSource synthesize_source(int size, std::mt19937_64& rng);

}  // namespace nedb
