#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

#include "nedb/tensor.hpp"

namespace nedb {

/// Pairwise Euclidean pixel distances of an H x W grid with 1 added, stored as
/// a (1, 1, H*W, H*W) tensor. Pixel index is row * W + col.
struct DistanceMatrix {
  std::int64_t height = 0;
  std::int64_t width = 0;
  Tensor values;

  std::int64_t pixels() const { return height * width; }
  double at(std::int64_t i, std::int64_t j) const { return values.data()[i * pixels() + j]; }
};

/// Raised when a distance matrix would exceed the pixel cap.
class DistanceMatrixTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr std::int64_t kDefaultMaxAttentionPixels = 4096;

DistanceMatrix build_distance_matrix(std::int64_t height, std::int64_t width,
                                     std::int64_t max_pixels = kDefaultMaxAttentionPixels);

/// Process-wide cache keyed by (H, W). Entries are immutable.
std::shared_ptr<const DistanceMatrix> cached_distance_matrix(std::int64_t height, std::int64_t width,
                                                             std::int64_t max_pixels = kDefaultMaxAttentionPixels);

/// 1x1 projections of a non-local block. Query and key reduce C to C/8.
struct NonLocalParams {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor out_weight, out_bias;

  std::int64_t channels() const { return value_weight.shape().n; }
  static NonLocalParams init(std::int64_t channels, std::mt19937_64& rng);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".query.weight", query_weight);
    f(prefix + ".query.bias", query_bias);
    f(prefix + ".key.weight", key_weight);
    f(prefix + ".key.bias", key_bias);
    f(prefix + ".value.weight", value_weight);
    f(prefix + ".value.bias", value_bias);
    f(prefix + ".out.weight", out_weight);
    f(prefix + ".out.bias", out_bias);
  }
};

/// Row-softmax of a (N, 1, P, P) correlation tensor, optionally divided
/// elementwise by the distance matrix first.
Tensor attention_from_correlation(const Tensor& correlation, const DistanceMatrix* distance);

/// Attention map (N, 1, HW, HW) of the block for input x.
Tensor attention_weights(const NonLocalParams& params, const Tensor& x, bool use_distance,
                         std::int64_t max_pixels = kDefaultMaxAttentionPixels);

/// x + out_proj(V * A^T), with A the (optionally distance-divided) attention.
Tensor attention_forward(const NonLocalParams& params, const Tensor& x, bool use_distance,
                         std::int64_t max_pixels = kDefaultMaxAttentionPixels);

}  // namespace nedb
