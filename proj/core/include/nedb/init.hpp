#pragma once

#include <random>

#include "nedb/tensor.hpp"

namespace nedb {

/// He-normal convolution weights for a K x C x kH x kW kernel.
Tensor he_normal(Shape kernel_shape, std::mt19937_64& rng);

/// Zero-valued parameter of the given shape.
Tensor zero_parameter(Shape shape);

/// Constant-valued parameter of the given shape.
Tensor constant_parameter(Shape shape, double value);

}  // namespace nedb
