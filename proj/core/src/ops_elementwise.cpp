#include <cmath>
#include <fmt/format.h>

#include "nedb/ops.hpp"
#include "nedb/tape.hpp"

namespace nedb::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape().str(), b.shape().str()));
  }
}

}  // namespace

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] < 0.0 ? 0.0 : in[i];
  return make_result(
      x.shape(), std::move(out), {x},
      [x](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        const auto in = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (in[i] > 0.0) gx[i] += g[i];
        }
      },
      "relu");
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = in[i];
    // Branch keeps exp() from overflowing for large |v|.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_result(
      x.shape(), std::move(out), {x},
      [x, y](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
      },
      "sigmoid");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const double> g, GradientSink& sink) {
        sink.accumulate(a, g);
        sink.accumulate(b, g);
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const double> g, GradientSink& sink) {
        sink.accumulate(a, g);
        if (double* gb = sink.buffer(b)) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const double> g, GradientSink& sink) {
        // Buffers may alias when a and b are the same tensor; accumulate one
        // side at a time.
        if (double* ga = sink.buffer(a)) {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
        }
        if (double* gb = sink.buffer(b)) {
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
        }
      },
      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const double> g, GradientSink& sink) {
        if (double* ga = sink.buffer(a)) {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / b.data()[i];
        }
        if (double* gb = sink.buffer(b)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = b.data()[i];
            gb[i] -= g[i] * a.data()[i] / (d * d);
          }
        }
      },
      "div");
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result(
      x.shape(), std::move(out), {x},
      [x, factor](std::span<const double> g, GradientSink& sink) {
        if (double* gx = sink.buffer(x)) {
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
        }
      },
      "scale");
}

Tensor add_scalar(const Tensor& x, double value) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + value;
  return make_result(
      x.shape(), std::move(out), {x},
      [x](std::span<const double> g, GradientSink& sink) { sink.accumulate(x, g); }, "add_scalar");
}

Tensor mul_channel(const Tensor& x, const Tensor& gate) {
  const Shape s = x.shape();
  if (gate.shape() != Shape{s.n, s.c, 1, 1}) {
    throw ShapeError(fmt::format("mul_channel: gate {} does not match {}", gate.shape().str(), s.str()));
  }
  const std::int64_t plane = s.h * s.w;
  std::vector<double> out(x.numel());
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const double k = gate.data()[p];
    for (std::int64_t i = 0; i < plane; ++i) out[p * plane + i] = x.data()[p * plane + i] * k;
  }
  return make_result(
      s, std::move(out), {x, gate},
      [x, gate, s, plane](std::span<const double> g, GradientSink& sink) {
        if (double* gx = sink.buffer(x)) {
          for (std::int64_t p = 0; p < s.n * s.c; ++p) {
            const double k = gate.data()[p];
            for (std::int64_t i = 0; i < plane; ++i) gx[p * plane + i] += g[p * plane + i] * k;
          }
        }
        if (double* gg = sink.buffer(gate)) {
          for (std::int64_t p = 0; p < s.n * s.c; ++p) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) acc += g[p * plane + i] * x.data()[p * plane + i];
            gg[p] += acc;
          }
        }
      },
      "mul_channel");
}

Tensor div_const(const Tensor& x, const Tensor& divisor) {
  const Shape s = x.shape();
  if (divisor.shape() != Shape{1, 1, s.h, s.w}) {
    throw ShapeError(
        fmt::format("div_const: divisor {} does not broadcast to {}", divisor.shape().str(), s.str()));
  }
  const std::int64_t plane = s.h * s.w;
  std::vector<double> out(x.numel());
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    for (std::int64_t i = 0; i < plane; ++i) out[p * plane + i] = x.data()[p * plane + i] / divisor.data()[i];
  }
  return make_result(
      s, std::move(out), {x},
      [x, divisor, s, plane](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::int64_t p = 0; p < s.n * s.c; ++p) {
          for (std::int64_t i = 0; i < plane; ++i) gx[p * plane + i] += g[p * plane + i] / divisor.data()[i];
        }
      },
      "div_const");
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = xs[0].shape();
  std::int64_t channels = 0;
  for (const auto& t : xs) {
    const Shape s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError(fmt::format("concat_channels: {} incompatible with {}", s.str(), first.str()));
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::int64_t plane = first.h * first.w;
  std::vector<double> out(os.numel());
  std::int64_t offset = 0;
  for (const auto& t : xs) {
    const std::int64_t c = t.shape().c;
    for (std::int64_t n = 0; n < first.n; ++n) {
      std::copy_n(t.ptr() + n * c * plane, c * plane, out.data() + (n * channels + offset) * plane);
    }
    offset += c;
  }
  std::vector<Tensor> inputs(xs.begin(), xs.end());
  return make_result(
      os, std::move(out), inputs,
      [inputs, channels, plane, batch = first.n](std::span<const double> g, GradientSink& sink) {
        std::int64_t offset = 0;
        for (const auto& t : inputs) {
          const std::int64_t c = t.shape().c;
          if (double* gt = sink.buffer(t)) {
            for (std::int64_t n = 0; n < batch; ++n) {
              const double* src = g.data() + (n * channels + offset) * plane;
              double* dst = gt + n * c * plane;
              for (std::int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
            }
          }
          offset += c;
        }
      },
      "concat_channels");
}

Tensor concat_channels(std::initializer_list<Tensor> xs) {
  return concat_channels(std::span<const Tensor>(xs.begin(), xs.size()));
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw ShapeError(fmt::format("slice_channels: [{}, {}) outside {} channels", begin, begin + count, s.c));
  }
  const Shape os{s.n, count, s.h, s.w};
  const std::int64_t plane = s.h * s.w;
  std::vector<double> out(os.numel());
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(x.ptr() + (n * s.c + begin) * plane, count * plane, out.data() + n * count * plane);
  }
  return make_result(
      os, std::move(out), {x},
      [x, s, begin, count, plane](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::int64_t n = 0; n < s.n; ++n) {
          const double* src = g.data() + n * count * plane;
          double* dst = gx + (n * s.c + begin) * plane;
          for (std::int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
        }
      },
      "slice_channels");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result(
      Shape{1, 1, 1, 1}, {acc}, {x},
      [x](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::int64_t i = 0; i < x.numel(); ++i) gx[i] += g[0];
      },
      "sum");
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace nedb::ops
