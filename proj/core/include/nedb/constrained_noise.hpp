#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nedb/tensor.hpp"

namespace nedb {

enum class InitScheme { kRandom, kRandomSum, kLaplaceLike, kLaplaceLikeD };
enum class ProjectionMode { kOriginal, kImproved };

/// What the improved projection writes into the center tap.
enum class CenterRule {
  /// -(sum of non-center weights after clamping); keeps the kernel zero-sum.
  kNegativeSum,
  /// -S_k, the absolute sum computed before normalization.
  kLiteralAbsSum,
};

/// How noise channels draw on image channels.
enum class ChannelMapping {
  /// Noise channel i filters image channel i only (3 kernels).
  kDiagonal,
  /// Every noise channel filters all three image channels (9 kernels).
  kDense,
};

inline constexpr double kMinNonCenterWeight = 0.001;

std::string_view to_string(InitScheme scheme);
std::string_view to_string(ProjectionMode mode);
InitScheme parse_init_scheme(std::string_view text);
ProjectionMode parse_projection_mode(std::string_view text);

/// Square odd-sized kernel stored row-major.
struct Kernel {
  int size = 0;
  std::vector<double> weights;

  int center_index() const { return (size / 2) * size + size / 2; }
  double center() const { return weights[static_cast<std::size_t>(center_index())]; }
  double non_center_sum() const;
  double total() const;
  double min_non_center() const;
  double max_abs() const;
};

Kernel init_laplace_like(int size);
/// Non-center weight at Euclidean distance d from the center is x / d, with
/// x chosen so the non-center weights sum to 1.
Kernel init_laplace_like_d(int size);
Kernel init_random(int size, std::mt19937_64& rng);
Kernel init_random_sum(int size, std::mt19937_64& rng);
Kernel init_kernel(InitScheme scheme, int size, std::mt19937_64& rng);

/// Outcome of projecting one kernel.
enum class ProjectionStatus { kApplied, kDegenerate };

/// Absolute-sum normalization with a 0.001 floor. Returns kDegenerate (and
/// leaves the kernel untouched) when every non-center weight is zero.
ProjectionStatus project_improved(Kernel& kernel, CenterRule rule = CenterRule::kNegativeSum);
/// Signed-sum normalization with center -1. Returns kDegenerate (and leaves
/// the kernel untouched) when the signed sum is exactly zero.
ProjectionStatus project_original(Kernel& kernel);

/// Learnable bank of high-pass kernels mapping a 3-channel image to a
/// 3-channel noise residual.
class ConstrainedKernelBank {
 public:
  ConstrainedKernelBank() = default;
  ConstrainedKernelBank(std::vector<Kernel> kernels, InitScheme scheme, ProjectionMode mode,
                        ChannelMapping mapping = ChannelMapping::kDiagonal,
                        CenterRule rule = CenterRule::kNegativeSum, std::uint64_t seed = 0);

  /// One size per kernel; a single size is broadcast to every kernel.
  static ConstrainedKernelBank create(std::vector<int> sizes, InitScheme scheme, ProjectionMode mode,
                                      std::uint64_t seed, ChannelMapping mapping = ChannelMapping::kDiagonal,
                                      CenterRule rule = CenterRule::kNegativeSum);

  std::size_t kernel_count() const { return kernels_.size(); }
  const Kernel& kernel(std::size_t i) const { return kernels_[i]; }
  Kernel& kernel(std::size_t i) { return kernels_[i]; }
  const std::vector<Kernel>& kernels() const { return kernels_; }

  InitScheme scheme() const { return scheme_; }
  ProjectionMode mode() const { return mode_; }
  ChannelMapping mapping() const { return mapping_; }
  CenterRule center_rule() const { return rule_; }
  int max_size() const;
  bool uniform_size() const;

  /// Applies the mode's projection to every kernel. Degenerate kernels are
  /// re-initialized from the scheme (improved) or left unchanged (original),
  /// with a logged warning. Returns the number of degenerate kernels.
  int project();

  /// Convolution weights as a fresh parameter leaf: (3, 1, k, k) for the
  /// diagonal mapping, (3, 3, k, k) for the dense one, with smaller kernels
  /// zero-embedded at the center of the largest size.
  Tensor weight_tensor() const;
  /// Gradient of kernel i extracted from a gradient shaped like weight_tensor().
  std::vector<double> kernel_gradient(std::span<const double> weight_grad, std::size_t i) const;

  /// Plain-text form: header `k K scheme mode`, then K blocks of k rows.
  void write(std::ostream& out) const;
  static ConstrainedKernelBank read(std::istream& in);
  void save(const std::string& path) const;
  static ConstrainedKernelBank load(const std::string& path);

 private:
  std::vector<Kernel> kernels_;
  InitScheme scheme_ = InitScheme::kLaplaceLikeD;
  ProjectionMode mode_ = ProjectionMode::kImproved;
  ChannelMapping mapping_ = ChannelMapping::kDiagonal;
  CenterRule rule_ = CenterRule::kNegativeSum;
  std::mt19937_64 reinit_rng_{0};
};

/// Same-padded stride-1 filtering of an N x 3 x H x W image with `weights`
/// (as produced by weight_tensor()).
Tensor extract_noise(const ConstrainedKernelBank& bank, const Tensor& weights, const Tensor& image);
Tensor extract_noise(const ConstrainedKernelBank& bank, const Tensor& image);

}  // namespace nedb
