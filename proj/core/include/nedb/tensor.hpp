#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nedb {

/// Extents of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Raised when an op receives operands whose extents do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when NaN or Inf reaches an op boundary.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable dense rank-4 array of doubles.
///
/// Copies share storage. Every tensor carries a process-unique id which the
/// tape uses to key gradient buffers, so two tensors holding equal values are
/// still distinct graph nodes.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  /// A leaf that participates in backward().
  static Tensor parameter(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  bool empty() const { return shape_.numel() == 0; }
  std::span<const double> data() const;
  const double* ptr() const { return data_->data(); }

  double at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;
  /// Value of a single-element tensor.
  double item() const;

  std::uint64_t id() const { return id_; }
  bool requires_grad() const { return requires_grad_; }

  /// Same values, new identity, no graph participation.
  Tensor detach() const;
  /// Same storage reinterpreted under a new shape with equal element count.
  /// Recorded on the active tape when the source requires grad.
  Tensor reshape(Shape shape) const;

  std::vector<double> to_vector() const { return *data_; }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::uint64_t id_;
  bool requires_grad_ = false;
};

/// Throws NonFiniteError when any value is NaN or infinite.
void check_finite(std::span<const double> values, const char* where);

}  // namespace nedb
