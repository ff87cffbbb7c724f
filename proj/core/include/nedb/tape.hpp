#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "nedb/tensor.hpp"

namespace nedb {

/// Accumulates gradient contributions for the inputs of one recorded op.
class GradientSink {
 public:
  explicit GradientSink(std::unordered_map<std::uint64_t, std::vector<double>>& buffers)
      : buffers_(buffers) {}

  /// Adds `grad` into the buffer of `input`. No-op when the input does not
  /// require grad.
  void accumulate(const Tensor& input, std::span<const double> grad);
  /// Mutable buffer for `input`, zero-initialized on first use; nullptr when
  /// the input does not require grad.
  double* buffer(const Tensor& input);

 private:
  std::unordered_map<std::uint64_t, std::vector<double>>& buffers_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, GradientSink& sink)>;

/// Gradients produced by Tape::backward, keyed by tensor identity.
class Gradients {
 public:
  bool has(const Tensor& t) const { return buffers_.count(t.id()) != 0; }
  /// Gradient of `t`; zeros when no path reached it.
  Tensor of(const Tensor& t) const;
  std::span<const double> raw(const Tensor& t) const;

 private:
  friend class Tape;
  std::unordered_map<std::uint64_t, std::vector<double>> buffers_;
};

/// Raised for backward() on a loss the tape never produced.
class DetachedGraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Ordered record of differentiable ops.
///
/// Single-writer: one forward pass records into one tape. backward() walks
/// the records in exact reverse order, so a tensor consumed by several ops
/// receives the sum of all path gradients.
class Tape {
 public:
  void record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);
  Gradients backward(const Tensor& loss) const;
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

 private:
  struct Record {
    std::uint64_t output_id;
    std::int64_t output_numel;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  std::vector<Record> records_;
};

/// Tape receiving ops on this thread, or nullptr.
Tape* active_tape();

/// Installs a tape as the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Builds an op result. When a tape is active and any input requires grad,
/// the result requires grad and `fn` is recorded. Values are checked for
/// finiteness.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   BackwardFn fn, const char* op_name);

}  // namespace nedb
