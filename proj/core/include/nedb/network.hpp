#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nedb/constrained_noise.hpp"
#include "nedb/distance_attention.hpp"
#include "nedb/layers.hpp"
#include "nedb/morphology.hpp"

namespace nedb {

/// Which constrained front end, if any, turns the image into a noise residual.
enum class NoiseFrontEnd { kNone, kOriginal, kImproved };

std::string_view to_string(NoiseFrontEnd f);
NoiseFrontEnd parse_noise_front_end(std::string_view text);

struct NedbConfig {
  int base_width = 8;
  /// Channels of the fused feature; 0 means 8 * base_width.
  int fusion_width = 0;
  int input_size = 512;
  std::array<int, 4> stage_depths{1, 1, 1, 1};

  NoiseFrontEnd noise = NoiseFrontEnd::kImproved;
  std::vector<int> cc_sizes{5};
  InitScheme cc_scheme = InitScheme::kLaplaceLikeD;
  CenterRule cc_center_rule = CenterRule::kNegativeSum;
  ChannelMapping cc_mapping = ChannelMapping::kDiagonal;

  bool dual_branch = true;
  bool use_edge = true;
  bool use_nonlocal = true;
  bool use_distance = true;
  std::int64_t attention_max_pixels = kDefaultMaxAttentionPixels;

  ElementShape edge_shape = ElementShape::kEllipse;
  int edge_size = 5;
  double alpha = 0.3;
  std::uint64_t seed = 0;

  int resolved_fusion_width() const { return fusion_width > 0 ? fusion_width : 8 * base_width; }
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  /// ResNet-34 widths and depths at 512 input with a 256-channel fused feature.
  static NedbConfig full_scale();
};

/// key=value view of a config, in a fixed order.
std::vector<std::pair<std::string, std::string>> to_key_values(const NedbConfig& config);
/// Applies one key; returns false for keys the config does not own.
bool apply_key_value(NedbConfig& config, const std::string& key, const std::string& value);

/// Raised when a feature map lands at the wrong resolution.
class TopologyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct FeatureTaps {
  Tensor noise;
  Tensor layer1, layer2, layer3h, layer4h, layer3l, layer4l;
  Tensor fused;
};

struct ForwardResult {
  Tensor mask;          // N x 1 x H x W probabilities
  Tensor edge;          // N x 1 x H/4 x W/4 probabilities
  Tensor bank_weights;  // constrained weights used, empty without a front end
  FeatureTaps taps;
};

struct MaskHead {
  std::array<ConvLayer, 3> convs;

  static MaskHead make(std::int64_t fusion_width, std::mt19937_64& rng);
  /// Logits at 8x the input resolution.
  Tensor logits(const Tensor& ff) const;
  Tensor operator()(const Tensor& ff) const { return ops::sigmoid(logits(ff)); }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    for (std::size_t i = 0; i < convs.size(); ++i) convs[i].visit(p + ".conv" + std::to_string(i), f);
  }
};

struct EdgeHead {
  std::vector<EebBlock> blocks;
  /// Upsampling factor per tap that brings it to 1/4 resolution.
  std::vector<int> factors;
  ConvLayer fuse;

  static EdgeHead make(std::vector<std::int64_t> channels, std::vector<int> factors, std::mt19937_64& rng);
  Tensor logits(std::span<const Tensor> features) const;
  Tensor operator()(std::span<const Tensor> features) const { return ops::sigmoid(logits(features)); }

  template <typename F>
  void visit(const std::string& p, F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(p + ".eeb" + std::to_string(i), f);
    fuse.visit(p + ".fuse", f);
  }
};

class NedbModel {
 public:
  explicit NedbModel(NedbConfig config);

  const NedbConfig& config() const { return config_; }
  ConstrainedKernelBank& bank() { return bank_; }
  const ConstrainedKernelBank& bank() const { return bank_; }

  ForwardResult forward(const Tensor& image, Mode mode);

  Tensor arm(std::size_t which, const Tensor& f, Mode mode) { return arms_[which](f, mode); }
  /// ARM, non-local and FFM fusion of the branch outputs into ff.
  Tensor fuse_branches(const Tensor& f3l, const Tensor& f4l, const Tensor& f4h, Mode mode);

  MaskHead& mask_head() { return mask_head_; }
  EdgeHead& edge_head() { return edge_head_; }
  FfmBlock& ffm() { return ffm_; }

  /// f(name, Tensor&) over every learnable tensor except the constrained bank.
  template <typename F>
  void visit_parameters(F&& f) {
    stem_conv_.visit("stem.conv", f);
    stem_bn_.visit("stem.bn", f);
    layer1_.visit("layer1", f);
    layer2_.visit("layer2", f);
    layer3l_.visit("layer3l", f);
    layer4l_.visit("layer4l", f);
    if (config_.dual_branch) {
      layer3h_.visit("layer3h", f);
      layer4h_.visit("layer4h", f);
      arms_[0].visit("arm3l", f);
      arms_[1].visit("arm4l", f);
      lateral_.visit("lateral", f);
      ffm_.visit("ffm", f);
    } else {
      single_fuse_.visit("single.fuse", f);
      single_bn_.visit("single.bn", f);
    }
    if (config_.use_nonlocal) {
      nonlocal_[0].visit("nonlocal3l", f);
      nonlocal_[1].visit("nonlocal4l", f);
    }
    mask_head_.visit("mask_head", f);
    edge_head_.visit("edge_head", f);
  }

  /// g(name, std::vector<double>&) over every running statistic.
  template <typename G>
  void visit_buffers(G&& g) {
    stem_bn_.visit_buffers("stem.bn", g);
    layer1_.visit_buffers("layer1", g);
    layer2_.visit_buffers("layer2", g);
    layer3l_.visit_buffers("layer3l", g);
    layer4l_.visit_buffers("layer4l", g);
    if (config_.dual_branch) {
      layer3h_.visit_buffers("layer3h", g);
      layer4h_.visit_buffers("layer4h", g);
      arms_[0].visit_buffers("arm3l", g);
      arms_[1].visit_buffers("arm4l", g);
      ffm_.visit_buffers("ffm", g);
    } else {
      single_bn_.visit_buffers("single.bn", g);
    }
  }

 private:
  NedbConfig config_;
  ConstrainedKernelBank bank_;
  ConvLayer stem_conv_;
  BatchNormLayer stem_bn_;
  ResidualStage layer1_, layer2_, layer3h_, layer4h_, layer3l_, layer4l_;
  std::array<ArmBlock, 2> arms_;
  std::array<NonLocalParams, 2> nonlocal_;
  ConvLayer lateral_;  // f4h (8w) -> 4w
  FfmBlock ffm_;
  ConvLayer single_fuse_;
  BatchNormLayer single_bn_;
  MaskHead mask_head_;
  EdgeHead edge_head_;
};

/// Per-channel statistics in B, G, R order. The divisors are applied exactly
/// as listed.
inline constexpr std::array<double, 3> kBgrMean{0.406, 0.456, 0.485};
inline constexpr std::array<double, 3> kBgrDivisor{0.225, 0.224, 0.229};

/// Interleaved BGR bytes (H x W x 3) to a 1 x 3 x H x W tensor in B, G, R
/// channel order: (v / 255 - mean) / divisor.
Tensor normalize_input(std::span<const std::uint8_t> bgr, int height, int width);
/// Inverse of normalize_input, returning interleaved BGR values in [0, 255]
/// (not rounded).
std::vector<double> denormalize(const Tensor& normalized);

}  // namespace nedb
