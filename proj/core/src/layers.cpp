#include "nedb/layers.hpp"

#include <algorithm>

#include "nedb/init.hpp"

namespace nedb {

ConvLayer ConvLayer::make(std::int64_t in, std::int64_t out, int kernel, int stride, bool with_bias,
                          std::mt19937_64& rng) {
  ConvLayer c;
  c.weight = he_normal({out, in, kernel, kernel}, rng);
  if (with_bias) c.bias = zero_parameter({1, out, 1, 1});
  c.options = {stride, kernel / 2, 1};
  return c;
}

BatchNormLayer BatchNormLayer::make(std::int64_t channels) {
  BatchNormLayer bn;
  bn.gamma = constant_parameter({1, channels, 1, 1}, 1.0);
  bn.beta = zero_parameter({1, channels, 1, 1});
  bn.stats.mean.assign(static_cast<std::size_t>(channels), 0.0);
  bn.stats.var.assign(static_cast<std::size_t>(channels), 1.0);
  return bn;
}

BasicBlock BasicBlock::make(std::int64_t in, std::int64_t out, int stride, std::mt19937_64& rng) {
  BasicBlock b;
  b.conv1 = ConvLayer::make(in, out, 3, stride, false, rng);
  b.bn1 = BatchNormLayer::make(out);
  b.conv2 = ConvLayer::make(out, out, 3, 1, false, rng);
  b.bn2 = BatchNormLayer::make(out);
  if (stride != 1 || in != out) {
    b.down_conv = ConvLayer::make(in, out, 1, stride, false, rng);
    b.down_bn = BatchNormLayer::make(out);
  }
  return b;
}

Tensor BasicBlock::operator()(const Tensor& x, Mode mode) {
  Tensor y = ops::relu(bn1(conv1(x), mode));
  y = bn2(conv2(y), mode);
  const Tensor shortcut = down_conv ? (*down_bn)((*down_conv)(x), mode) : x;
  return ops::relu(ops::add(y, shortcut));
}

ResidualStage ResidualStage::make(std::int64_t in, std::int64_t out, int depth, int stride, std::mt19937_64& rng) {
  ResidualStage s;
  for (int i = 0; i < depth; ++i) s.blocks.push_back(BasicBlock::make(i == 0 ? in : out, out, i == 0 ? stride : 1, rng));
  return s;
}

Tensor ResidualStage::operator()(const Tensor& x, Mode mode) {
  Tensor y = x;
  for (auto& b : blocks) y = b(y, mode);
  return y;
}

ArmBlock ArmBlock::make(std::int64_t channels, std::mt19937_64& rng) {
  return {ConvLayer::make(channels, channels, 1, 1, false, rng), BatchNormLayer::make(channels)};
}

Tensor ArmBlock::operator()(const Tensor& f, Mode mode) {
  const Tensor gate = ops::sigmoid(bn(conv(ops::global_avgpool(f)), mode));
  return ops::mul_channel(f, gate);
}

FfmBlock FfmBlock::make(std::int64_t in, std::int64_t out, std::mt19937_64& rng) {
  FfmBlock b;
  b.fuse = ConvLayer::make(in, out, 1, 1, false, rng);
  b.bn = BatchNormLayer::make(out);
  const std::int64_t hidden = std::max<std::int64_t>(1, out / 4);
  b.attend1 = ConvLayer::make(out, hidden, 1, 1, true, rng);
  b.attend2 = ConvLayer::make(hidden, out, 1, 1, true, rng);
  return b;
}

Tensor FfmBlock::operator()(const Tensor& a, const Tensor& b, Mode mode) {
  const Tensor h = ops::relu(bn(fuse(ops::concat_channels({a, b})), mode));
  const Tensor gate = ops::sigmoid(attend2(ops::relu(attend1(ops::global_avgpool(h)))));
  return ops::add(h, ops::mul_channel(h, gate));
}

EebBlock EebBlock::make(std::int64_t channels, std::mt19937_64& rng) {
  const std::int64_t reduced = std::max<std::int64_t>(1, channels / 4);
  EebBlock e;
  e.entry = ConvLayer::make(channels, reduced, 1, 1, true, rng);
  e.body1 = ConvLayer::make(reduced, reduced, 3, 1, true, rng);
  e.body2 = ConvLayer::make(reduced, reduced, 3, 1, true, rng);
  e.exit = ConvLayer::make(reduced, 1, 1, 1, true, rng);
  return e;
}

Tensor EebBlock::operator()(const Tensor& x) const {
  const Tensor r = ops::relu(entry(x));
  const Tensor body = body2(ops::relu(body1(r)));
  return exit(ops::relu(ops::add(r, body)));
}

}  // namespace nedb
