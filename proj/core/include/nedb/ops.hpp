#pragma once

#include <span>
#include <vector>

#include "nedb/tensor.hpp"

/// Differentiable tensor operations. Every op records itself on the active
/// tape (see TapeScope) when one of its inputs requires grad.
namespace nedb::ops {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  /// Input and output channels are split into this many independent groups.
  int groups = 1;
};

/// Cross-correlation (no kernel flip). `weight` is K x C/groups x kH x kW,
/// `bias` is empty or holds K values in any shape.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts = {});

enum class BatchNormMode { kTrain, kEval };

/// Running statistics owned by a normalization layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
};

struct BatchNormOptions {
  BatchNormMode mode = BatchNormMode::kTrain;
  /// running = momentum * running + (1 - momentum) * batch
  double momentum = 0.9;
  double eps = 1e-5;
};

/// Per-channel normalization over (N, H, W). Train mode normalizes with batch
/// statistics and updates `stats`; eval mode uses `stats`.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                 BatchNormOptions opts = {});

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

/// x (N,C,H,W) times a per-channel gate s (N,C,1,1).
Tensor mul_channel(const Tensor& x, const Tensor& gate);
/// Elementwise division by a constant (1,1,H,W) tensor broadcast over N and
/// C. The divisor never receives a gradient.
Tensor div_const(const Tensor& x, const Tensor& divisor);

Tensor concat_channels(std::span<const Tensor> xs);
Tensor concat_channels(std::initializer_list<Tensor> xs);
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count);

/// Half-pixel (align-corners=false) bilinear interpolation.
Tensor bilinear_upsample(const Tensor& x, int factor);

/// Padded cells never win; ties go to the first row-major index.
Tensor maxpool2d(const Tensor& x, int kernel = 3, int stride = 2, int padding = 1);
Tensor global_avgpool(const Tensor& x);

/// Batched over (N, C): (P x Q) * (Q x R).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the two trailing extents.
Tensor transpose_last(const Tensor& x);
/// Softmax along the last extent, stabilized by max subtraction.
Tensor softmax_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace nedb::ops
