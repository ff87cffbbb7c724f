#include "nedb/distance_attention.hpp"

#include <cmath>
#include <fmt/format.h>
#include <map>
#include <mutex>

#include "nedb/init.hpp"
#include "nedb/ops.hpp"

namespace nedb {

DistanceMatrix build_distance_matrix(std::int64_t height, std::int64_t width, std::int64_t max_pixels) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument(fmt::format("distance matrix needs H, W >= 1, got {}x{}", height, width));
  }
  const std::int64_t pixels = height * width;
  if (pixels > max_pixels) {
    throw DistanceMatrixTooLarge(fmt::format(
        "distance matrix for a {}x{} feature map has {}^2 entries, above the cap of {} pixels; "
        "apply attention to a smaller (more downsampled) feature map",
        height, width, pixels, max_pixels));
  }
  std::vector<double> d(pixels * pixels);
  for (std::int64_t i = 0; i < pixels; ++i) {
    const std::int64_t ri = i / width, ci = i % width;
    for (std::int64_t j = 0; j < pixels; ++j) {
      const double dr = static_cast<double>(ri - j / width);
      const double dc = static_cast<double>(ci - j % width);
      d[i * pixels + j] = std::sqrt(dr * dr + dc * dc) + 1.0;
    }
  }
  return {height, width, Tensor({1, 1, pixels, pixels}, std::move(d))};
}

std::shared_ptr<const DistanceMatrix> cached_distance_matrix(std::int64_t height, std::int64_t width,
                                                             std::int64_t max_pixels) {
  static std::mutex mu;
  static std::map<std::pair<std::int64_t, std::int64_t>, std::shared_ptr<const DistanceMatrix>> cache;
  if (height * width > max_pixels) return std::make_shared<const DistanceMatrix>(build_distance_matrix(height, width, max_pixels));
  std::lock_guard lock(mu);
  auto& slot = cache[{height, width}];
  if (!slot) slot = std::make_shared<const DistanceMatrix>(build_distance_matrix(height, width, max_pixels));
  return slot;
}

NonLocalParams NonLocalParams::init(std::int64_t channels, std::mt19937_64& rng) {
  if (channels < 8 || channels % 8 != 0) {
    throw std::invalid_argument(fmt::format("non-local block needs channels divisible by 8, got {}", channels));
  }
  const std::int64_t reduced = channels / 8;
  NonLocalParams p;
  p.query_weight = he_normal({reduced, channels, 1, 1}, rng);
  p.query_bias = zero_parameter({1, reduced, 1, 1});
  p.key_weight = he_normal({reduced, channels, 1, 1}, rng);
  p.key_bias = zero_parameter({1, reduced, 1, 1});
  p.value_weight = he_normal({channels, channels, 1, 1}, rng);
  p.value_bias = zero_parameter({1, channels, 1, 1});
  p.out_weight = he_normal({channels, channels, 1, 1}, rng);
  p.out_bias = zero_parameter({1, channels, 1, 1});
  return p;
}

Tensor attention_from_correlation(const Tensor& correlation, const DistanceMatrix* distance) {
  if (distance == nullptr) return ops::softmax_rows(correlation);
  return ops::softmax_rows(ops::div_const(correlation, distance->values));
}

namespace {

struct Projected {
  Tensor attention;  // N x 1 x HW x HW
  Tensor value;      // N x 1 x C x HW
};

Projected project(const NonLocalParams& params, const Tensor& x, bool use_distance, std::int64_t max_pixels) {
  const Shape s = x.shape();
  if (s.c % 8 != 0 || s.c != params.channels()) {
    throw ShapeError(fmt::format("non-local block with {} channels got input {}", params.channels(), s.str()));
  }
  const std::int64_t reduced = s.c / 8;
  const std::int64_t pixels = s.h * s.w;
  // Reject oversized maps before allocating the HW x HW correlation.
  std::shared_ptr<const DistanceMatrix> dist;
  if (use_distance) {
    dist = cached_distance_matrix(s.h, s.w, max_pixels);
  } else if (pixels > max_pixels) {
    throw DistanceMatrixTooLarge(fmt::format("attention over {} pixels exceeds cap {}", pixels, max_pixels));
  }

  const Tensor q = ops::conv2d(x, params.query_weight, params.query_bias).reshape({s.n, 1, reduced, pixels});
  const Tensor k = ops::conv2d(x, params.key_weight, params.key_bias).reshape({s.n, 1, reduced, pixels});
  const Tensor v = ops::conv2d(x, params.value_weight, params.value_bias).reshape({s.n, 1, s.c, pixels});

  // Cor[i][j] = <q_i, k_j> / sqrt(C/8)
  const Tensor cor = ops::scale(ops::matmul(ops::transpose_last(q), k), 1.0 / std::sqrt(static_cast<double>(reduced)));
  return {attention_from_correlation(cor, dist.get()), v};
}

}  // namespace

Tensor attention_weights(const NonLocalParams& params, const Tensor& x, bool use_distance, std::int64_t max_pixels) {
  return project(params, x, use_distance, max_pixels).attention;
}

Tensor attention_forward(const NonLocalParams& params, const Tensor& x, bool use_distance, std::int64_t max_pixels) {
  const Shape s = x.shape();
  const Projected p = project(params, x, use_distance, max_pixels);
  // out[c][i] = sum_j V[c][j] * A[i][j]
  const Tensor mixed = ops::matmul(p.value, ops::transpose_last(p.attention)).reshape(s);
  return ops::add(x, ops::conv2d(mixed, params.out_weight, params.out_bias));
}

}  // namespace nedb
