#include <gtest/gtest.h>

#include <cmath>

#include "nedb/checkpoint.hpp"
#include "nedb/gradcheck.hpp"
#include "nedb/network.hpp"
#include "nedb/ops.hpp"
#include "nedb/run_config.hpp"

using namespace nedb;

namespace {

NedbConfig small(bool dual = true) {
  NedbConfig c;
  c.base_width = 8;
  c.input_size = 32;
  c.dual_branch = dual;
  c.seed = 11;
  return c;
}

Tensor random_image(int n, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor({n, 3, size, size}, rng, -2.0, 2.0);
}

void zero(Tensor& t) { t = Tensor::parameter(t.shape(), std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0)); }

}  // namespace

TEST(Arm, ZeroConvGivesHalfGate) {
  std::mt19937_64 rng(0);
  auto arm = ArmBlock::make(4, rng);
  zero(arm.conv.weight);
  const Tensor f = random_tensor({1, 4, 3, 3}, rng);
  const Tensor y = arm(f, Mode::kEval);
  for (std::int64_t i = 0; i < f.numel(); ++i) EXPECT_NEAR(y.data()[i], 0.5 * f.data()[i], 1e-15);
}

TEST(Ffm, ShapeAndResidualForm) {
  std::mt19937_64 rng(1);
  auto ffm = FfmBlock::make(12, 8, rng);
  const Tensor a = random_tensor({2, 4, 5, 5}, rng), b = random_tensor({2, 8, 5, 5}, rng);
  EXPECT_EQ(ffm(a, b, Mode::kTrain).shape(), (Shape{2, 8, 5, 5}));
  zero(ffm.attend2.weight);
  zero(ffm.attend2.bias);
  // Gate is 0.5 everywhere, so out = 1.5 h and every output is >= 0.
  const Tensor y = ffm(a, b, Mode::kEval);
  for (double v : y.data()) EXPECT_GE(v, 0.0);
}

TEST(Heads, ZeroWeightsGiveOneHalf) {
  std::mt19937_64 rng(2);
  auto mask = MaskHead::make(16, rng);
  mask.visit("m", [](const std::string&, Tensor& t) { zero(t); });
  const Tensor m = mask(random_tensor({1, 16, 4, 4}, rng));
  EXPECT_EQ(m.shape(), (Shape{1, 1, 32, 32}));
  for (double v : m.data()) EXPECT_EQ(v, 0.5);

  auto edge = EdgeHead::make({4, 8}, {1, 2}, rng);
  edge.visit("e", [](const std::string&, Tensor& t) { zero(t); });
  const std::vector<Tensor> taps{random_tensor({1, 4, 8, 8}, rng), random_tensor({1, 8, 4, 4}, rng)};
  const Tensor e = edge(taps);
  EXPECT_EQ(e.shape(), (Shape{1, 1, 8, 8}));
  for (double v : e.data()) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(edge(std::span<const Tensor>(taps.data(), 1)), TopologyError);
}

TEST(Model, ForwardShapesDualBranch) {
  NedbModel model(small());
  const ForwardResult r = model.forward(random_image(2, 32, 1), Mode::kTrain);
  EXPECT_EQ(r.mask.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_EQ(r.edge.shape(), (Shape{2, 1, 8, 8}));
  EXPECT_EQ(r.taps.layer1.shape(), (Shape{2, 8, 8, 8}));
  EXPECT_EQ(r.taps.layer2.shape(), (Shape{2, 16, 4, 4}));
  EXPECT_EQ(r.taps.layer3l.shape(), (Shape{2, 32, 2, 2}));
  EXPECT_EQ(r.taps.layer4l.shape(), (Shape{2, 64, 1, 1}));
  EXPECT_EQ(r.taps.layer3h.shape().h, 4);
  EXPECT_EQ(r.taps.layer4h.shape().h, 4);
  EXPECT_EQ(r.taps.fused.shape(), (Shape{2, 64, 4, 4}));
  EXPECT_EQ(r.bank_weights.shape(), (Shape{3, 1, 5, 5}));
  for (const Tensor* t : {&r.mask, &r.edge}) {
    for (double v : t->data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Model, ForwardShapesSingleBranchAndNoFrontEnd) {
  NedbConfig c = small(false);
  c.noise = NoiseFrontEnd::kNone;
  NedbModel model(c);
  const ForwardResult r = model.forward(random_image(1, 32, 2), Mode::kEval);
  EXPECT_EQ(r.mask.shape(), (Shape{1, 1, 32, 32}));
  EXPECT_EQ(r.edge.shape(), (Shape{1, 1, 8, 8}));
  EXPECT_TRUE(r.bank_weights.empty());
  EXPECT_TRUE(r.taps.layer3h.empty());
}

TEST(Model, RejectsWrongInputExtent) {
  NedbModel model(small());
  EXPECT_THROW(model.forward(random_image(1, 64, 0), Mode::kEval), ShapeError);
  EXPECT_THROW(model.forward(Tensor::zeros({1, 1, 32, 32}), Mode::kEval), ShapeError);
}

TEST(Model, DuplicatedBatchGivesIdenticalOutputsInEval) {
  NedbModel model(small());
  const Tensor one = random_image(1, 32, 5);
  std::vector<double> two = one.to_vector();
  two.insert(two.end(), two.begin(), two.end());
  const ForwardResult r = model.forward(Tensor({2, 3, 32, 32}, two), Mode::kEval);
  const std::int64_t half = r.mask.numel() / 2;
  for (std::int64_t i = 0; i < half; ++i) EXPECT_EQ(r.mask.data()[i], r.mask.data()[half + i]);
}

TEST(Model, SameSeedSameWeights) {
  NedbModel a(small()), b(small());
  std::vector<std::vector<double>> wa, wb;
  a.visit_parameters([&](const std::string&, Tensor& t) { wa.push_back(t.to_vector()); });
  b.visit_parameters([&](const std::string&, Tensor& t) { wb.push_back(t.to_vector()); });
  EXPECT_EQ(wa, wb);
}

TEST(Config, ValidationErrors) {
  NedbConfig c = small();
  c.base_width = 12;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small();
  c.input_size = 48;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small();
  c.cc_sizes = {4};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small();
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(NedbConfig::full_scale().validate());
}

TEST(Config, KeyValueRoundTrip) {
  NedbConfig c = NedbConfig::full_scale();
  c.cc_sizes = {3, 5, 7};
  c.edge_shape = ElementShape::kCross;
  c.alpha = 0.123456789;
  c.use_distance = false;
  NedbConfig back;
  for (const auto& [k, v] : to_key_values(c)) EXPECT_TRUE(apply_key_value(back, k, v)) << k;
  EXPECT_EQ(to_key_values(back), to_key_values(c));
  EXPECT_FALSE(apply_key_value(back, "no_such_key", "1"));
  EXPECT_THROW(apply_key_value(back, "use_edge", "maybe"), std::invalid_argument);
}

TEST(Normalize, KnownValuesAndRoundTrip) {
  const std::vector<std::uint8_t> px{0, 128, 255, 10, 20, 30};
  const Tensor t = normalize_input(px, 1, 2);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_NEAR(t.at(0, 0, 0, 0), (0.0 - 0.406) / 0.225, 1e-15);
  EXPECT_NEAR(t.at(0, 1, 0, 0), (128 / 255.0 - 0.456) / 0.224, 1e-15);
  EXPECT_NEAR(t.at(0, 2, 0, 0), (1.0 - 0.485) / 0.229, 1e-15);
  const auto back = denormalize(t);
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_NEAR(back[i], px[i], 1e-9);
  EXPECT_THROW(normalize_input(px, 2, 2), ShapeError);
}

TEST(Checkpoint, RoundTripIsBitExactAfterFirstEncode) {
  NedbModel model(small());
  const auto bytes = encode_checkpoint(model);
  NedbModel back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  NedbModel again = decode_checkpoint(bytes);
  const Tensor img = random_image(1, 32, 9);
  const Tensor a = back.forward(img, Mode::kEval).mask, b = again.forward(img, Mode::kEval).mask;
  EXPECT_EQ(a.to_vector(), b.to_vector());
  EXPECT_EQ(to_key_values(back.config()), to_key_values(model.config()));
}

TEST(Checkpoint, CorruptionAndTruncationDetected) {
  NedbModel model(small());
  auto bytes = encode_checkpoint(model);
  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(flipped), CheckpointError);
  auto cut = bytes;
  cut.resize(cut.size() / 3);
  EXPECT_THROW(decode_checkpoint(cut), CheckpointError);
  EXPECT_THROW(decode_checkpoint({}), CheckpointError);
}

TEST(Checkpoint, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(fnv1a64(a, 1), 0xaf63dc4c8601ec8cULL);
}
