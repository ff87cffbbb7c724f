#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "nedb/ops.hpp"
#include "nedb/tape.hpp"

namespace nedb::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.c != sb.c || sa.w != sb.h) {
    throw ShapeError(fmt::format("matmul: {} incompatible with {}", sa.str(), sb.str()));
  }
  const std::int64_t p = sa.h, q = sa.w, r = sb.w;
  const Shape os{sa.n, sa.c, p, r};
  std::vector<double> out(os.numel());
  for (std::int64_t i = 0; i < sa.n * sa.c; ++i) {
    MutMap(out.data() + i * p * r, p, r).noalias() =
        ConstMap(a.ptr() + i * p * q, p, q) * ConstMap(b.ptr() + i * q * r, q, r);
  }
  return make_result(
      os, std::move(out), {a, b},
      [a, b, p, q, r, batch = sa.n * sa.c](std::span<const double> g, GradientSink& sink) {
        double* ga = sink.buffer(a);
        double* gb = sink.buffer(b);
        for (std::int64_t i = 0; i < batch; ++i) {
          ConstMap gm(g.data() + i * p * r, p, r);
          if (ga != nullptr) {
            MutMap(ga + i * p * q, p, q).noalias() += gm * ConstMap(b.ptr() + i * q * r, q, r).transpose();
          }
          if (gb != nullptr) {
            MutMap(gb + i * q * r, q, r).noalias() += ConstMap(a.ptr() + i * p * q, p, q).transpose() * gm;
          }
        }
      },
      "matmul");
}

Tensor transpose_last(const Tensor& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.w, s.h};
  std::vector<double> out(x.numel());
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    for (std::int64_t i = 0; i < s.h; ++i) {
      for (std::int64_t j = 0; j < s.w; ++j) out[p * plane + j * s.h + i] = x.data()[p * plane + i * s.w + j];
    }
  }
  return make_result(
      os, std::move(out), {x},
      [x, s, plane](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::int64_t p = 0; p < s.n * s.c; ++p) {
          for (std::int64_t i = 0; i < s.h; ++i) {
            for (std::int64_t j = 0; j < s.w; ++j) gx[p * plane + i * s.w + j] += g[p * plane + j * s.h + i];
          }
        }
      },
      "transpose_last");
}

Tensor softmax_rows(const Tensor& x) {
  const Shape s = x.shape();
  const std::int64_t rows = s.n * s.c * s.h;
  const std::int64_t len = s.w;
  if (len == 0) throw ShapeError("softmax_rows: empty rows");
  std::vector<double> out(x.numel());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* src = x.ptr() + r * len;
    double* dst = out.data() + r * len;
    const double mx = *std::max_element(src, src + len);
    double total = 0.0;
    for (std::int64_t j = 0; j < len; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (std::int64_t j = 0; j < len; ++j) dst[j] /= total;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_result(
      s, std::move(out), {x},
      [x, y, rows, len](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        if (gx == nullptr) return;
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* yr = y->data() + r * len;
          const double* gr = g.data() + r * len;
          double dot = 0.0;
          for (std::int64_t j = 0; j < len; ++j) dot += gr[j] * yr[j];
          for (std::int64_t j = 0; j < len; ++j) gx[r * len + j] += yr[j] * (gr[j] - dot);
        }
      },
      "softmax_rows");
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                 BatchNormOptions opts) {
  const Shape s = x.shape();
  const auto channels = static_cast<std::size_t>(s.c);
  if (gamma.numel() != s.c || beta.numel() != s.c) {
    throw ShapeError(fmt::format("batchnorm: gamma/beta have {}/{} values for {} channels", gamma.numel(),
                                 beta.numel(), s.c));
  }
  if (stats.mean.size() != channels || stats.var.size() != channels) {
    throw ShapeError(fmt::format("batchnorm: running statistics sized {} for {} channels", stats.mean.size(), s.c));
  }
  const std::int64_t plane = s.h * s.w;
  const std::int64_t count = s.n * plane;
  if (count == 0) throw ShapeError("batchnorm: empty input");

  std::vector<double> mu(channels), inv_std(channels);
  const bool train = opts.mode == BatchNormMode::kTrain;
  for (std::size_t c = 0; c < channels; ++c) {
    if (train) {
      double acc = 0.0;
      for (std::int64_t n = 0; n < s.n; ++n) {
        const double* src = x.ptr() + (n * s.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
      }
      const double m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::int64_t n = 0; n < s.n; ++n) {
        const double* src = x.ptr() + (n * s.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) sq += (src[i] - m) * (src[i] - m);
      }
      const double var = sq / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + opts.eps);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      stats.mean[c] = opts.momentum * stats.mean[c] + (1.0 - opts.momentum) * m;
      stats.var[c] = opts.momentum * stats.var[c] + (1.0 - opts.momentum) * unbiased;
    } else {
      mu[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + opts.eps);
    }
  }

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::int64_t base = (n * s.c + static_cast<std::int64_t>(c)) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double h = (x.data()[base + i] - mu[c]) * inv_std[c];
        (*xhat)[base + i] = h;
        out[base + i] = gamma.data()[c] * h + beta.data()[c];
      }
    }
  }

  return make_result(
      s, std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, s, plane, count, train](std::span<const double> g, GradientSink& sink) {
        double* gx = sink.buffer(x);
        double* gg = sink.buffer(gamma);
        double* gb = sink.buffer(beta);
        for (std::int64_t c = 0; c < s.c; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t n = 0; n < s.n; ++n) {
            const std::int64_t base = (n * s.c + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * (*xhat)[base + i];
            }
          }
          if (gg != nullptr) gg[c] += sum_gx;
          if (gb != nullptr) gb[c] += sum_g;
          if (gx == nullptr) continue;
          const double k = gamma.data()[c] * inv_std[c];
          const double inv_m = 1.0 / static_cast<double>(count);
          for (std::int64_t n = 0; n < s.n; ++n) {
            const std::int64_t base = (n * s.c + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              if (train) {
                gx[base + i] += k * (g[base + i] - inv_m * sum_g - (*xhat)[base + i] * inv_m * sum_gx);
              } else {
                gx[base + i] += k * g[base + i];
              }
            }
          }
        }
      },
      "batchnorm");
}

}  // namespace nedb::ops
