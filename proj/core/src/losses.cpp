#include "nedb/losses.hpp"

#include <fmt/format.h>

#include "nedb/ops.hpp"

namespace nedb {

Tensor dice_loss(const Tensor& pred, const Tensor& gt, double eps) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(fmt::format("dice_loss: prediction {} vs ground truth {}", pred.shape().str(), gt.shape().str()));
  }
  for (double g : gt.data()) {
    if (g != 0.0 && g != 1.0) throw std::invalid_argument("dice_loss: ground truth must be binary");
  }
  for (double p : pred.data()) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("dice_loss: predictions must lie in [0, 1]");
  }
  const Tensor overlap = ops::sum(ops::mul(pred, gt));
  const Tensor pred_sq = ops::sum(ops::mul(pred, pred));
  double gt_sq = 0.0;
  for (double g : gt.data()) gt_sq += g * g;
  const Tensor numerator = ops::add_scalar(ops::scale(overlap, 2.0), eps);
  const Tensor denominator = ops::add_scalar(pred_sq, gt_sq + eps);
  return ops::add_scalar(ops::scale(ops::div(numerator, denominator), -1.0), 1.0);
}

CombinedLoss combined_loss(const Tensor& mask_pred, const Tensor& mask_gt, const Tensor& edge_pred,
                           const Tensor& edge_gt, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("combined_loss: alpha must lie in [0, 1]");
  CombinedLoss out;
  out.region = dice_loss(mask_pred, mask_gt);
  out.edge = dice_loss(edge_pred, edge_gt);
  out.total = ops::add(ops::scale(out.region, alpha), ops::scale(out.edge, 1.0 - alpha));
  return out;
}

double combine(double region, double edge, double alpha) { return alpha * region + (1.0 - alpha) * edge; }

}  // namespace nedb
