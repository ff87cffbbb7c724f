#pragma once

#include <span>
#include <vector>

#include "nedb/image_io.hpp"

namespace nedb {

/// Sampled Gaussian of width 2*ceil(3*sigma)+1 normalized to sum 1;
/// sigma <= 0 gives the identity kernel {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur of one H x W plane with edge-replicate padding.
std::vector<double> blur_plane(std::span<const double> plane, int height, int width, double sigma);

/// Blurs every channel; results are rounded and clamped to [0, 255].
Image gaussian_blur(const Image& image, double sigma);

/// Maps each value to one of `levels` uniform bins, then back to the bin's
/// representative: round(floor(v * levels / 256) * 255 / (levels - 1)).
Image quantize(const Image& image, int levels);

/// Bilinear resize with half-pixel centers; used to bring inputs to the
/// model resolution.
Image resize_bilinear(const Image& image, int width, int height);
/// Nearest-neighbour resize for masks.
BinaryMask resize_nearest(const BinaryMask& mask, int width, int height);

}  // namespace nedb
