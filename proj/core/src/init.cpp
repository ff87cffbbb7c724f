#include "nedb/init.hpp"

#include <cmath>

namespace nedb {

Tensor he_normal(Shape kernel_shape, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(kernel_shape.c * kernel_shape.h * kernel_shape.w);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  std::vector<double> w(kernel_shape.numel());
  for (auto& v : w) v = dist(rng);
  return Tensor::parameter(kernel_shape, std::move(w));
}

Tensor zero_parameter(Shape shape) { return constant_parameter(shape, 0.0); }

Tensor constant_parameter(Shape shape, double value) {
  return Tensor::parameter(shape, std::vector<double>(shape.numel(), value));
}

}  // namespace nedb
