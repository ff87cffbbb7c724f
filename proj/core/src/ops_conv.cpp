#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "nedb/ops.hpp"
#include "nedb/tape.hpp"

namespace nedb::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::int64_t channels_in;  // per group
  std::int64_t channels_out;  // per group
  std::int64_t h, w, kh, kw, oh, ow;
  int stride, pad;
  std::int64_t col_rows() const { return channels_in * kh * kw; }
  std::int64_t col_cols() const { return oh * ow; }
};

// One image, one group: (Cg*kh*kw) x (oh*ow), zero outside the image.
void im2col(const double* src, const ConvGeometry& g, double* cols) {
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels_in; ++c) {
    const double* plane = src + c * g.h * g.w;
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj, ++row) {
        double* dst = cols + row * g.col_cols();
        for (std::int64_t oi = 0; oi < g.oh; ++oi) {
          const std::int64_t ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) {
            std::fill(dst + oi * g.ow, dst + (oi + 1) * g.ow, 0.0);
            continue;
          }
          for (std::int64_t oj = 0; oj < g.ow; ++oj) {
            const std::int64_t jj = oj * g.stride - g.pad + kj;
            dst[oi * g.ow + oj] = (jj < 0 || jj >= g.w) ? 0.0 : plane[ii * g.w + jj];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dst_img) {
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < g.channels_in; ++c) {
    double* plane = dst_img + c * g.h * g.w;
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj, ++row) {
        const double* src = cols + row * g.col_cols();
        for (std::int64_t oi = 0; oi < g.oh; ++oi) {
          const std::int64_t ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          for (std::int64_t oj = 0; oj < g.ow; ++oj) {
            const std::int64_t jj = oj * g.stride - g.pad + kj;
            if (jj >= 0 && jj < g.w) plane[ii * g.w + jj] += src[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (opts.groups < 1 || opts.stride < 1 || opts.padding < 0) {
    throw std::invalid_argument("conv2d: invalid stride/padding/groups");
  }
  if (ws.h % 2 == 0 || ws.w % 2 == 0) {
    throw ShapeError("conv2d: kernel extents must be odd, got " + ws.str());
  }
  if (xs.c % opts.groups != 0 || ws.n % opts.groups != 0 || ws.c * opts.groups != xs.c) {
    throw ShapeError(fmt::format("conv2d: input {} incompatible with kernel {} (groups {})", xs.str(),
                                 ws.str(), opts.groups));
  }
  if (!bias.empty() && bias.numel() != ws.n) {
    throw ShapeError(fmt::format("conv2d: bias has {} values for {} kernels", bias.numel(), ws.n));
  }
  const std::int64_t oh = (xs.h + 2 * opts.padding - ws.h) / opts.stride + 1;
  const std::int64_t ow = (xs.w + 2 * opts.padding - ws.w) / opts.stride + 1;
  if (xs.h + 2 * opts.padding < ws.h || xs.w + 2 * opts.padding < ws.w || oh < 1 || ow < 1) {
    throw ShapeError(fmt::format("conv2d: kernel {} does not fit input {} with padding {}", ws.str(),
                                 xs.str(), opts.padding));
  }

  const ConvGeometry g{ws.c, ws.n / opts.groups, xs.h, xs.w, ws.h, ws.w, oh, ow, opts.stride, opts.padding};
  const Shape out_shape{xs.n, ws.n, oh, ow};
  std::vector<double> out(out_shape.numel(), 0.0);
  std::vector<double> cols(g.col_rows() * g.col_cols());
  const std::int64_t w_group = g.channels_out * g.col_rows();

  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (int grp = 0; grp < opts.groups; ++grp) {
      im2col(x.ptr() + (n * xs.c + grp * g.channels_in) * xs.h * xs.w, g, cols.data());
      ConstMap wm(weight.ptr() + grp * w_group, g.channels_out, g.col_rows());
      ConstMap cm(cols.data(), g.col_rows(), g.col_cols());
      MutMap om(out.data() + (n * ws.n + grp * g.channels_out) * oh * ow, g.channels_out, g.col_cols());
      om.noalias() = wm * cm;
    }
    if (!bias.empty()) {
      for (std::int64_t k = 0; k < ws.n; ++k) {
        double* o = out.data() + (n * ws.n + k) * oh * ow;
        const double b = bias.data()[k];
        for (std::int64_t i = 0; i < oh * ow; ++i) o[i] += b;
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (!bias.empty()) inputs.push_back(bias);
  return make_result(
      out_shape, std::move(out), std::move(inputs),
      [x, weight, bias, g, opts, xs, ws, w_group](std::span<const double> gy, GradientSink& sink) {
        double* gx = sink.buffer(x);
        double* gw = sink.buffer(weight);
        double* gb = bias.empty() ? nullptr : sink.buffer(bias);
        std::vector<double> cols(g.col_rows() * g.col_cols());
        const std::int64_t plane = g.oh * g.ow;
        for (std::int64_t n = 0; n < xs.n; ++n) {
          for (int grp = 0; grp < opts.groups; ++grp) {
            ConstMap gym(gy.data() + (n * ws.n + grp * g.channels_out) * plane, g.channels_out, plane);
            if (gw != nullptr) {
              im2col(x.ptr() + (n * xs.c + grp * g.channels_in) * xs.h * xs.w, g, cols.data());
              ConstMap cm(cols.data(), g.col_rows(), g.col_cols());
              MutMap gwm(gw + grp * w_group, g.channels_out, g.col_rows());
              gwm.noalias() += gym * cm.transpose();
            }
            if (gx != nullptr) {
              ConstMap wm(weight.ptr() + grp * w_group, g.channels_out, g.col_rows());
              MutMap cm(cols.data(), g.col_rows(), g.col_cols());
              cm.noalias() = wm.transpose() * gym;
              col2im_add(cols.data(), g, gx + (n * xs.c + grp * g.channels_in) * xs.h * xs.w);
            }
          }
          if (gb != nullptr) {
            for (std::int64_t k = 0; k < ws.n; ++k) {
              const double* src = gy.data() + (n * ws.n + k) * plane;
              double acc = 0.0;
              for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
              gb[k] += acc;
            }
          }
        }
      },
      "conv2d");
}

Tensor bilinear_upsample(const Tensor& x, int factor) {
  if (factor != 2 && factor != 4 && factor != 8) {
    throw std::invalid_argument(fmt::format("bilinear_upsample: factor {} not in {{2,4,8}}", factor));
  }
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * factor, s.w * factor};

  struct Tap {
    std::int64_t i0, i1;
    double frac;
  };
  auto taps = [factor](std::int64_t out_len, std::int64_t in_len) {
    std::vector<Tap> t(out_len);
    for (std::int64_t o = 0; o < out_len; ++o) {
      double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
      if (src < 0.0) src = 0.0;
      auto i0 = static_cast<std::int64_t>(std::floor(src));
      if (i0 > in_len - 1) i0 = in_len - 1;
      const std::int64_t i1 = std::min(i0 + 1, in_len - 1);
      t[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(os.h, s.h);
  const auto tx = taps(os.w, s.w);

  std::vector<double> out(os.numel());
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const double* src = x.ptr() + p * s.h * s.w;
    double* dst = out.data() + p * os.h * os.w;
    for (std::int64_t oi = 0; oi < os.h; ++oi) {
      const Tap& a = ty[oi];
      for (std::int64_t oj = 0; oj < os.w; ++oj) {
        const Tap& b = tx[oj];
        const double top = src[a.i0 * s.w + b.i0] * (1 - b.frac) + src[a.i0 * s.w + b.i1] * b.frac;
        const double bot = src[a.i1 * s.w + b.i0] * (1 - b.frac) + src[a.i1 * s.w + b.i1] * b.frac;
        dst[oi * os.w + oj] = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }
  return make_result(
      os, std::move(out), {x},
      [x, s, os, ty, tx](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::int64_t p = 0; p < s.n * s.c; ++p) {
          double* dst = gx + p * s.h * s.w;
          const double* src = g.data() + p * os.h * os.w;
          for (std::int64_t oi = 0; oi < os.h; ++oi) {
            const Tap& a = ty[oi];
            for (std::int64_t oj = 0; oj < os.w; ++oj) {
              const Tap& b = tx[oj];
              const double v = src[oi * os.w + oj];
              dst[a.i0 * s.w + b.i0] += v * (1 - a.frac) * (1 - b.frac);
              dst[a.i0 * s.w + b.i1] += v * (1 - a.frac) * b.frac;
              dst[a.i1 * s.w + b.i0] += v * a.frac * (1 - b.frac);
              dst[a.i1 * s.w + b.i1] += v * a.frac * b.frac;
            }
          }
        }
      },
      "bilinear_upsample");
}

Tensor maxpool2d(const Tensor& x, int kernel, int stride, int padding) {
  const Shape s = x.shape();
  if (kernel < 1 || stride < 1 || padding < 0 || 2 * padding > kernel) {
    throw std::invalid_argument("maxpool2d: invalid kernel/stride/padding");
  }
  const std::int64_t oh = (s.h + 2 * padding - kernel) / stride + 1;
  const std::int64_t ow = (s.w + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw ShapeError("maxpool2d: window larger than input " + s.str());
  const Shape os{s.n, s.c, oh, ow};
  std::vector<double> out(os.numel());
  std::vector<std::int64_t> argmax(os.numel());
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const double* src = x.ptr() + p * s.h * s.w;
    for (std::int64_t oi = 0; oi < oh; ++oi) {
      for (std::int64_t oj = 0; oj < ow; ++oj) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const std::int64_t ii = oi * stride - padding + ki;
          if (ii < 0 || ii >= s.h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const std::int64_t jj = oj * stride - padding + kj;
            if (jj < 0 || jj >= s.w) continue;
            const double v = src[ii * s.w + jj];
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = ii * s.w + jj;
            }
          }
        }
        const std::int64_t o = (p * oh + oi) * ow + oj;
        out[o] = best;
        argmax[o] = p * s.h * s.w + best_idx;
      }
    }
  }
  return make_result(
      os, std::move(out), {x},
      [x, argmax = std::move(argmax)](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
      },
      "maxpool2d");
}

Tensor global_avgpool(const Tensor& x) {
  const Shape s = x.shape();
  if (s.h * s.w == 0) throw ShapeError("global_avgpool: empty spatial extent");
  const Shape os{s.n, s.c, 1, 1};
  const std::int64_t plane = s.h * s.w;
  std::vector<double> out(os.numel());
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const double* src = x.ptr() + p * plane;
    double acc = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
    out[p] = acc / static_cast<double>(plane);
  }
  return make_result(
      os, std::move(out), {x},
      [x, plane](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::size_t p = 0; p < g.size(); ++p) {
          const double v = g[p] / static_cast<double>(plane);
          for (std::int64_t i = 0; i < plane; ++i) gx[p * plane + i] += v;
        }
      },
      "global_avgpool");
}

}  // namespace nedb::ops
