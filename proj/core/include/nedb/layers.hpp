#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nedb/ops.hpp"
#include "nedb/tensor.hpp"

namespace nedb {

using Mode = ops::BatchNormMode;

/// Visitor over learnable tensors: f(name, Tensor&).
/// Visitor over running statistics: g(name, std::vector<double>&).
/// Every block below exposes visit(prefix, f) and visit_buffers(prefix, g).

struct ConvLayer {
  Tensor weight;
  Tensor bias;  // empty when the layer has no bias
  ops::Conv2dOptions options;

  static ConvLayer make(std::int64_t in, std::int64_t out, int kernel, int stride, bool with_bias,
                        std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, options); }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + ".weight", weight);
    if (!bias.empty()) f(p + ".bias", bias);
  }
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  ops::BatchNormStats stats;

  static BatchNormLayer make(std::int64_t channels);
  Tensor operator()(const Tensor& x, Mode mode) { return ops::batchnorm(x, gamma, beta, stats, {mode}); }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    f(p + ".gamma", gamma);
    f(p + ".beta", beta);
  }
  template <typename G>
  void visit_buffers(const std::string& p, G&& g) {
    g(p + ".running_mean", stats.mean);
    g(p + ".running_var", stats.var);
  }
};

/// conv3x3-bn-relu-conv3x3-bn plus shortcut, then relu.
struct BasicBlock {
  ConvLayer conv1;
  BatchNormLayer bn1;
  ConvLayer conv2;
  BatchNormLayer bn2;
  std::optional<ConvLayer> down_conv;
  std::optional<BatchNormLayer> down_bn;

  static BasicBlock make(std::int64_t in, std::int64_t out, int stride, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, Mode mode);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    conv1.visit(p + ".conv1", f);
    bn1.visit(p + ".bn1", f);
    conv2.visit(p + ".conv2", f);
    bn2.visit(p + ".bn2", f);
    if (down_conv) down_conv->visit(p + ".down_conv", f);
    if (down_bn) down_bn->visit(p + ".down_bn", f);
  }
  template <typename G>
  void visit_buffers(const std::string& p, G&& g) {
    bn1.visit_buffers(p + ".bn1", g);
    bn2.visit_buffers(p + ".bn2", g);
    if (down_bn) down_bn->visit_buffers(p + ".down_bn", g);
  }
};

struct ResidualStage {
  std::vector<BasicBlock> blocks;

  static ResidualStage make(std::int64_t in, std::int64_t out, int depth, int stride, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x, Mode mode);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(p + "." + std::to_string(i), f);
  }
  template <typename G>
  void visit_buffers(const std::string& p, G&& g) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit_buffers(p + "." + std::to_string(i), g);
  }
};

/// Channel attention: f * sigmoid(bn(conv1x1(avgpool(f)))).
struct ArmBlock {
  ConvLayer conv;
  BatchNormLayer bn;

  static ArmBlock make(std::int64_t channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& f, Mode mode);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    conv.visit(p + ".conv", f);
    bn.visit(p + ".bn", f);
  }
  template <typename G>
  void visit_buffers(const std::string& p, G&& g) {
    bn.visit_buffers(p + ".bn", g);
  }
};

/// h = relu(bn(conv1x1(cat(a, b)))); out = h + h * sigmoid(conv(relu(conv(avgpool(h))))).
struct FfmBlock {
  ConvLayer fuse;
  BatchNormLayer bn;
  ConvLayer attend1;
  ConvLayer attend2;

  static FfmBlock make(std::int64_t in, std::int64_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& a, const Tensor& b, Mode mode);

  template <typename F>
  void visit(const std::string& p, F&& f) {
    fuse.visit(p + ".fuse", f);
    bn.visit(p + ".bn", f);
    attend1.visit(p + ".attend1", f);
    attend2.visit(p + ".attend2", f);
  }
  template <typename G>
  void visit_buffers(const std::string& p, G&& g) {
    bn.visit_buffers(p + ".bn", g);
  }
};

/// Edge extraction block: 1x1 down to C/4, residual pair of 3x3 convs, 1x1 to
/// a single edge logit channel.
struct EebBlock {
  ConvLayer entry;
  ConvLayer body1;
  ConvLayer body2;
  ConvLayer exit;

  static EebBlock make(std::int64_t channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;

  template <typename F>
  void visit(const std::string& p, F&& f) {
    entry.visit(p + ".entry", f);
    body1.visit(p + ".body1", f);
    body2.visit(p + ".body2", f);
    exit.visit(p + ".exit", f);
  }
};

}  // namespace nedb
