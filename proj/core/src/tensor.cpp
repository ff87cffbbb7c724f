#include "nedb/tensor.hpp"

#include <atomic>
#include <cmath>
#include <fmt/format.h>

#include "nedb/tape.hpp"

namespace nedb {
namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

std::string Shape::str() const { return fmt::format("{}x{}x{}x{}", n, c, h, w); }

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>()), id_(next_id()) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(shape), id_(next_id()), requires_grad_(requires_grad) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
    throw ShapeError(fmt::format("data length {} does not match shape {}", data.size(), shape.str()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return Tensor(shape, std::vector<double>(shape.numel(), 0.0)); }

Tensor Tensor::full(Shape shape, double value) {
  return Tensor(shape, std::vector<double>(shape.numel(), value));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  check_finite(data, "parameter");
  return Tensor(shape, std::move(data), true);
}

std::span<const double> Tensor::data() const { return {data_->data(), data_->size()}; }

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  return (*data_)[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  return out;
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape.numel() != numel()) {
    throw ShapeError(fmt::format("cannot reshape {} to {}", shape_.str(), shape.str()));
  }
  // Values are shared; backward passes the gradient through unchanged.
  return make_result(
      shape, *data_, {*this},
      [src = *this](std::span<const double> g, GradientSink& sink) { sink.accumulate(src, g); },
      "reshape");
}

void check_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteError(fmt::format("non-finite value produced by {}", where));
  }
}

}  // namespace nedb
