#include "nedb/network.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>
#include <sstream>

namespace nedb {
namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    std::size_t used = 0;
    const int v = std::stoi(part, &used);
    if (used != part.size()) throw std::invalid_argument("bad integer '" + part + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument("bad boolean '" + text + "'");
}

int parse_int(const std::string& text) {
  std::size_t used = 0;
  const int v = std::stoi(text, &used);
  if (used != text.size()) throw std::invalid_argument("bad integer '" + text + "'");
  return v;
}

void expect_extent(const Tensor& t, std::int64_t size, std::int64_t divisor, const char* name) {
  const std::int64_t want = size / divisor;
  if (t.shape().h != want || t.shape().w != want) {
    throw TopologyError(
        fmt::format("{} is {} but must sit at 1/{} of {} ({}x{})", name, t.shape().str(), divisor, size, want, want));
  }
}

}  // namespace

std::string_view to_string(NoiseFrontEnd f) {
  switch (f) {
    case NoiseFrontEnd::kNone: return "none";
    case NoiseFrontEnd::kOriginal: return "original";
    case NoiseFrontEnd::kImproved: return "improved";
  }
  return "?";
}

NoiseFrontEnd parse_noise_front_end(std::string_view text) {
  if (text == "none") return NoiseFrontEnd::kNone;
  if (text == "original") return NoiseFrontEnd::kOriginal;
  if (text == "improved") return NoiseFrontEnd::kImproved;
  throw std::invalid_argument(fmt::format("unknown noise front end '{}'", text));
}

void NedbConfig::validate() const {
  if (base_width < 8 || base_width % 8 != 0) {
    throw std::invalid_argument(fmt::format("base_width must be a positive multiple of 8, got {}", base_width));
  }
  if (input_size < 32 || input_size % 32 != 0) {
    throw std::invalid_argument(fmt::format("input_size must be a positive multiple of 32, got {}", input_size));
  }
  if (resolved_fusion_width() < 1) throw std::invalid_argument("fusion_width must be positive");
  for (int d : stage_depths) {
    if (d < 1) throw std::invalid_argument("stage depths must be >= 1");
  }
  if (cc_sizes.empty()) throw std::invalid_argument("cc_sizes must not be empty");
  for (int k : cc_sizes) {
    if (k < 3 || k % 2 == 0) throw std::invalid_argument(fmt::format("constrained kernel size {} is not odd >= 3", k));
  }
  if (edge_size < 1 || edge_size % 2 == 0) throw std::invalid_argument("edge_size must be odd");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
}

NedbConfig NedbConfig::full_scale() {
  NedbConfig c;
  c.base_width = 64;
  c.fusion_width = 256;
  c.input_size = 512;
  c.stage_depths = {3, 4, 6, 3};
  return c;
}

std::vector<std::pair<std::string, std::string>> to_key_values(const NedbConfig& c) {
  auto list = [](const auto& xs) { return fmt::format("{}", fmt::join(xs, ",")); };
  return {
      {"base_width", std::to_string(c.base_width)},
      {"fusion_width", std::to_string(c.fusion_width)},
      {"input_size", std::to_string(c.input_size)},
      {"stage_depths", list(c.stage_depths)},
      {"noise", std::string(to_string(c.noise))},
      {"cc_sizes", list(c.cc_sizes)},
      {"cc_scheme", std::string(to_string(c.cc_scheme))},
      {"cc_center_rule", c.cc_center_rule == CenterRule::kNegativeSum ? "negative-sum" : "literal"},
      {"cc_mapping", c.cc_mapping == ChannelMapping::kDiagonal ? "diagonal" : "dense"},
      {"dual_branch", c.dual_branch ? "true" : "false"},
      {"use_edge", c.use_edge ? "true" : "false"},
      {"use_nonlocal", c.use_nonlocal ? "true" : "false"},
      {"use_distance", c.use_distance ? "true" : "false"},
      {"attention_max_pixels", std::to_string(c.attention_max_pixels)},
      {"edge_shape", std::string(to_string(c.edge_shape))},
      {"edge_size", std::to_string(c.edge_size)},
      {"alpha", fmt::format("{:.17g}", c.alpha)},
      {"model_seed", std::to_string(c.seed)},
  };
}

bool apply_key_value(NedbConfig& c, const std::string& key, const std::string& value) {
  if (key == "base_width") {
    c.base_width = parse_int(value);
  } else if (key == "fusion_width") {
    c.fusion_width = parse_int(value);
  } else if (key == "input_size") {
    c.input_size = parse_int(value);
  } else if (key == "stage_depths") {
    const auto d = parse_int_list(value);
    if (d.size() != 4) throw std::invalid_argument("stage_depths needs 4 values");
    std::copy(d.begin(), d.end(), c.stage_depths.begin());
  } else if (key == "noise") {
    c.noise = parse_noise_front_end(value);
  } else if (key == "cc_sizes") {
    c.cc_sizes = parse_int_list(value);
  } else if (key == "cc_scheme") {
    c.cc_scheme = parse_init_scheme(value);
  } else if (key == "cc_center_rule") {
    if (value == "negative-sum") {
      c.cc_center_rule = CenterRule::kNegativeSum;
    } else if (value == "literal") {
      c.cc_center_rule = CenterRule::kLiteralAbsSum;
    } else {
      throw std::invalid_argument("cc_center_rule must be negative-sum or literal");
    }
  } else if (key == "cc_mapping") {
    if (value == "diagonal") {
      c.cc_mapping = ChannelMapping::kDiagonal;
    } else if (value == "dense") {
      c.cc_mapping = ChannelMapping::kDense;
    } else {
      throw std::invalid_argument("cc_mapping must be diagonal or dense");
    }
  } else if (key == "dual_branch") {
    c.dual_branch = parse_bool(value);
  } else if (key == "use_edge") {
    c.use_edge = parse_bool(value);
  } else if (key == "use_nonlocal") {
    c.use_nonlocal = parse_bool(value);
  } else if (key == "use_distance") {
    c.use_distance = parse_bool(value);
  } else if (key == "attention_max_pixels") {
    c.attention_max_pixels = std::stoll(value);
  } else if (key == "edge_shape") {
    c.edge_shape = parse_element_shape(value);
  } else if (key == "edge_size") {
    c.edge_size = parse_int(value);
  } else if (key == "alpha") {
    c.alpha = std::stod(value);
  } else if (key == "model_seed") {
    c.seed = std::stoull(value);
  } else {
    return false;
  }
  return true;
}

MaskHead MaskHead::make(std::int64_t fusion_width, std::mt19937_64& rng) {
  const std::int64_t c1 = std::max<std::int64_t>(1, fusion_width / 4);
  const std::int64_t c2 = std::max<std::int64_t>(1, fusion_width / 16);
  return {{ConvLayer::make(fusion_width, c1, 3, 1, true, rng), ConvLayer::make(c1, c2, 3, 1, true, rng),
           ConvLayer::make(c2, 1, 3, 1, true, rng)}};
}

Tensor MaskHead::logits(const Tensor& ff) const {
  Tensor y = ff;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    y = convs[i](ops::bilinear_upsample(y, 2));
    if (i + 1 < convs.size()) y = ops::relu(y);
  }
  return y;
}

EdgeHead EdgeHead::make(std::vector<std::int64_t> channels, std::vector<int> factors, std::mt19937_64& rng) {
  EdgeHead h;
  for (auto c : channels) h.blocks.push_back(EebBlock::make(c, rng));
  h.factors = std::move(factors);
  h.fuse = ConvLayer::make(static_cast<std::int64_t>(channels.size()), 1, 3, 1, true, rng);
  return h;
}

Tensor EdgeHead::logits(std::span<const Tensor> features) const {
  if (features.size() != blocks.size()) {
    throw TopologyError(fmt::format("edge head expects {} taps, got {}", blocks.size(), features.size()));
  }
  std::vector<Tensor> maps;
  maps.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    Tensor e = blocks[i](features[i]);
    if (e.shape().c != 1) throw TopologyError("edge extraction block must emit one channel");
    if (factors[i] != 1) e = ops::bilinear_upsample(e, factors[i]);
    maps.push_back(std::move(e));
  }
  return fuse(ops::concat_channels(maps));
}

NedbModel::NedbModel(NedbConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::int64_t w = config_.base_width;
  const auto& d = config_.stage_depths;

  if (config_.noise != NoiseFrontEnd::kNone) {
    bank_ = ConstrainedKernelBank::create(
        config_.cc_sizes, config_.cc_scheme,
        config_.noise == NoiseFrontEnd::kOriginal ? ProjectionMode::kOriginal : ProjectionMode::kImproved,
        config_.seed + 1, config_.cc_mapping, config_.cc_center_rule);
  }
  stem_conv_ = ConvLayer::make(3, w, 7, 2, false, rng);
  stem_bn_ = BatchNormLayer::make(w);
  layer1_ = ResidualStage::make(w, w, d[0], 1, rng);
  layer2_ = ResidualStage::make(w, 2 * w, d[1], 2, rng);
  layer3l_ = ResidualStage::make(2 * w, 4 * w, d[2], 2, rng);
  layer4l_ = ResidualStage::make(4 * w, 8 * w, d[3], 2, rng);
  const std::int64_t fusion = config_.resolved_fusion_width();
  if (config_.dual_branch) {
    layer3h_ = ResidualStage::make(2 * w, 4 * w, d[2], 1, rng);
    layer4h_ = ResidualStage::make(4 * w, 8 * w, d[3], 1, rng);
    arms_ = {ArmBlock::make(4 * w, rng), ArmBlock::make(8 * w, rng)};
    lateral_ = ConvLayer::make(8 * w, 4 * w, 1, 1, false, rng);
    ffm_ = FfmBlock::make(12 * w, fusion, rng);
  } else {
    single_fuse_ = ConvLayer::make(8 * w, fusion, 1, 1, false, rng);
    single_bn_ = BatchNormLayer::make(fusion);
  }
  if (config_.use_nonlocal) nonlocal_ = {NonLocalParams::init(4 * w, rng), NonLocalParams::init(8 * w, rng)};
  mask_head_ = MaskHead::make(fusion, rng);
  if (config_.dual_branch) {
    edge_head_ = EdgeHead::make({w, 2 * w, 4 * w, 4 * w, 8 * w, 8 * w}, {1, 2, 2, 4, 2, 8}, rng);
  } else {
    edge_head_ = EdgeHead::make({w, 2 * w, 4 * w, 8 * w}, {1, 2, 4, 8}, rng);
  }
}

Tensor NedbModel::fuse_branches(const Tensor& f3l, const Tensor& f4l, const Tensor& f4h, Mode mode) {
  const std::int64_t hr = f4h.shape().h;
  if (f3l.shape().h * 2 != hr || f4l.shape().h * 4 != hr) {
    throw TopologyError(fmt::format("fuse_branches: f3l {}, f4l {} and f4h {} are not at 1/16, 1/32, 1/8",
                                    f3l.shape().str(), f4l.shape().str(), f4h.shape().str()));
  }
  Tensor n3 = arms_[0](f3l, mode);
  Tensor n4 = arms_[1](f4l, mode);
  if (config_.use_nonlocal) {
    n3 = attention_forward(nonlocal_[0], n3, config_.use_distance, config_.attention_max_pixels);
    n4 = attention_forward(nonlocal_[1], n4, config_.use_distance, config_.attention_max_pixels);
  }
  const Tensor first = ops::add(ops::bilinear_upsample(n3, 2), lateral_(f4h));
  const Tensor second = ops::add(ops::bilinear_upsample(n4, 4), f4h);
  return ffm_(first, second, mode);
}

ForwardResult NedbModel::forward(const Tensor& image, Mode mode) {
  const Shape s = image.shape();
  const int size = config_.input_size;
  if (s.c != 3 || s.h != size || s.w != size) {
    throw ShapeError(fmt::format("model expects N x 3 x {} x {} input, got {}", size, size, s.str()));
  }
  double peak = 0.0;
  for (double v : image.data()) peak = std::max(peak, std::abs(v));
  if (peak > 10.0) spdlog::warn("input magnitude {} exceeds 10; was the image normalized?", peak);

  ForwardResult r;
  Tensor x = image;
  if (config_.noise != NoiseFrontEnd::kNone) {
    r.bank_weights = bank_.weight_tensor();
    x = extract_noise(bank_, r.bank_weights, image);
  }
  r.taps.noise = x;

  Tensor stem = ops::maxpool2d(ops::relu(stem_bn_(stem_conv_(x), mode)), 3, 2, 1);
  FeatureTaps& t = r.taps;
  t.layer1 = layer1_(stem, mode);
  expect_extent(t.layer1, size, 4, "layer1");
  t.layer2 = layer2_(t.layer1, mode);
  expect_extent(t.layer2, size, 8, "layer2");
  t.layer3l = layer3l_(t.layer2, mode);
  expect_extent(t.layer3l, size, 16, "layer3l");
  t.layer4l = layer4l_(t.layer3l, mode);
  expect_extent(t.layer4l, size, 32, "layer4l");

  std::vector<Tensor> edge_taps;
  if (config_.dual_branch) {
    t.layer3h = layer3h_(t.layer2, mode);
    expect_extent(t.layer3h, size, 8, "layer3h");
    t.layer4h = layer4h_(t.layer3h, mode);
    expect_extent(t.layer4h, size, 8, "layer4h");
    t.fused = fuse_branches(t.layer3l, t.layer4l, t.layer4h, mode);
    edge_taps = {t.layer1, t.layer2, t.layer3h, t.layer3l, t.layer4h, t.layer4l};
  } else {
    Tensor top = t.layer4l;
    if (config_.use_nonlocal) {
      top = attention_forward(nonlocal_[1], top, config_.use_distance, config_.attention_max_pixels);
    }
    t.fused = ops::relu(single_bn_(single_fuse_(ops::bilinear_upsample(top, 4)), mode));
    edge_taps = {t.layer1, t.layer2, t.layer3l, t.layer4l};
  }
  expect_extent(t.fused, size, 8, "ff");

  r.mask = mask_head_(t.fused);
  r.edge = edge_head_(edge_taps);
  expect_extent(r.mask, size, 1, "mask");
  expect_extent(r.edge, size, 4, "edge");
  return r;
}

Tensor normalize_input(std::span<const std::uint8_t> bgr, int height, int width) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (bgr.size() != plane * 3) {
    throw ShapeError(fmt::format("normalize_input: {} bytes for a {}x{}x3 image", bgr.size(), height, width));
  }
  std::vector<double> out(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[c * plane + i] = (bgr[i * 3 + c] / 255.0 - kBgrMean[c]) / kBgrDivisor[c];
    }
  }
  return Tensor({1, 3, height, width}, std::move(out));
}

std::vector<double> denormalize(const Tensor& normalized) {
  const Shape s = normalized.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("denormalize expects 1 x 3 x H x W, got " + s.str());
  const std::size_t plane = static_cast<std::size_t>(s.h * s.w);
  std::vector<double> out(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[i * 3 + c] = (normalized.data()[c * plane + i] * kBgrDivisor[c] + kBgrMean[c]) * 255.0;
    }
  }
  return out;
}

}  // namespace nedb
