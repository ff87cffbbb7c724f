#pragma once

#include "nedb/tensor.hpp"

namespace nedb {

inline constexpr double kDiceEpsilon = 1.0;

/// Soft Dice with squared denominator:
///   1 - (2 * sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps)
/// summed over every element of the batch. Differentiable in `pred`.
Tensor dice_loss(const Tensor& pred, const Tensor& gt, double eps = kDiceEpsilon);

struct CombinedLoss {
  Tensor region;
  Tensor edge;
  Tensor total;  // alpha * region + (1 - alpha) * edge
};

CombinedLoss combined_loss(const Tensor& mask_pred, const Tensor& mask_gt, const Tensor& edge_pred,
                           const Tensor& edge_gt, double alpha);

/// alpha * region + (1 - alpha) * edge on plain numbers.
double combine(double region, double edge, double alpha);

}  // namespace nedb
