#include "nedb/tape.hpp"

#include <fmt/format.h>

namespace nedb {
namespace {

thread_local Tape* g_active_tape = nullptr;

}  // namespace

void GradientSink::accumulate(const Tensor& input, std::span<const double> grad) {
  double* dst = buffer(input);
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += grad[i];
}

double* GradientSink::buffer(const Tensor& input) {
  if (!input.requires_grad()) return nullptr;
  auto& buf = buffers_[input.id()];
  if (buf.empty()) buf.assign(static_cast<std::size_t>(input.numel()), 0.0);
  return buf.data();
}

Tensor Gradients::of(const Tensor& t) const {
  auto it = buffers_.find(t.id());
  if (it == buffers_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second);
}

std::span<const double> Gradients::raw(const Tensor& t) const {
  auto it = buffers_.find(t.id());
  if (it == buffers_.end()) return {};
  return it->second;
}

void Tape::record(const Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  records_.push_back({output.id(), output.numel(), std::move(inputs), std::move(fn)});
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a single-element loss, got " + loss.shape().str());
  }
  if (records_.empty()) throw DetachedGraphError("backward() on an empty tape");
  bool produced = false;
  for (const auto& r : records_) {
    if (r.output_id == loss.id()) {
      produced = true;
      break;
    }
  }
  if (!loss.requires_grad() || !produced) {
    throw DetachedGraphError("backward() on a tensor that was not recorded on this tape");
  }

  Gradients grads;
  GradientSink sink(grads.buffers_);
  grads.buffers_[loss.id()] = {1.0};
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto found = grads.buffers_.find(it->output_id);
    if (found == grads.buffers_.end()) continue;
    // The op may insert new buffers, so work on a copy of the upstream grad.
    const std::vector<double> upstream = found->second;
    it->fn(upstream, sink);
  }
  return grads;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn fn,
                   const char* op_name) {
  check_finite(data, op_name);
  Tape* tape = active_tape();
  bool track = false;
  if (tape != nullptr) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  Tensor out(shape, std::move(data), track);
  if (track) tape->record(out, std::move(inputs), std::move(fn));
  return out;
}

}  // namespace nedb
