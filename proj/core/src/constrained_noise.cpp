#include "nedb/constrained_noise.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <sstream>
#include <spdlog/spdlog.h>

#include "nedb/ops.hpp"

namespace nedb {
namespace {

void require_odd(int size) {
  if (size < 3 || size % 2 == 0) {
    throw std::invalid_argument(fmt::format("constrained kernel size must be odd and >= 3, got {}", size));
  }
}

Kernel centered_kernel(int size) {
  require_odd(size);
  Kernel k{size, std::vector<double>(static_cast<std::size_t>(size * size), 0.0)};
  k.weights[static_cast<std::size_t>(k.center_index())] = -1.0;
  return k;
}

double open_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double v = 0.0;
  while (v == 0.0) v = dist(rng);
  return v;
}

}  // namespace

std::string_view to_string(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kRandom: return "random";
    case InitScheme::kRandomSum: return "random-sum";
    case InitScheme::kLaplaceLike: return "laplace-like";
    case InitScheme::kLaplaceLikeD: return "laplace-like-d";
  }
  return "?";
}

std::string_view to_string(ProjectionMode mode) {
  return mode == ProjectionMode::kOriginal ? "original" : "improved";
}

InitScheme parse_init_scheme(std::string_view text) {
  for (auto s : {InitScheme::kRandom, InitScheme::kRandomSum, InitScheme::kLaplaceLike, InitScheme::kLaplaceLikeD}) {
    if (text == to_string(s)) return s;
  }
  throw std::invalid_argument(fmt::format("unknown init scheme '{}'", text));
}

ProjectionMode parse_projection_mode(std::string_view text) {
  if (text == "original") return ProjectionMode::kOriginal;
  if (text == "improved") return ProjectionMode::kImproved;
  throw std::invalid_argument(fmt::format("unknown projection mode '{}'", text));
}

double Kernel::non_center_sum() const { return total() - center(); }

double Kernel::total() const {
  double acc = 0.0;
  for (double w : weights) acc += w;
  return acc;
}

double Kernel::min_non_center() const {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < size * size; ++i) {
    if (i != center_index()) m = std::min(m, weights[static_cast<std::size_t>(i)]);
  }
  return m;
}

double Kernel::max_abs() const {
  double m = 0.0;
  for (double w : weights) m = std::max(m, std::abs(w));
  return m;
}

Kernel init_laplace_like(int size) {
  Kernel k = centered_kernel(size);
  const double v = 1.0 / static_cast<double>(size * size - 1);
  for (int i = 0; i < size * size; ++i) {
    if (i != k.center_index()) k.weights[static_cast<std::size_t>(i)] = v;
  }
  return k;
}

Kernel init_laplace_like_d(int size) {
  Kernel k = centered_kernel(size);
  const int c = size / 2;
  double inverse_distance_sum = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      if (i == c && j == c) continue;
      inverse_distance_sum += 1.0 / std::hypot(i - c, j - c);
    }
  }
  const double x = 1.0 / inverse_distance_sum;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      if (i == c && j == c) continue;
      k.weights[static_cast<std::size_t>(i * size + j)] = x / std::hypot(i - c, j - c);
    }
  }
  return k;
}

Kernel init_random(int size, std::mt19937_64& rng) {
  Kernel k = centered_kernel(size);
  for (int i = 0; i < size * size; ++i) {
    if (i != k.center_index()) k.weights[static_cast<std::size_t>(i)] = open_unit(rng);
  }
  return k;
}

Kernel init_random_sum(int size, std::mt19937_64& rng) {
  Kernel k = init_random(size, rng);
  const double s = k.non_center_sum();
  for (int i = 0; i < size * size; ++i) {
    if (i != k.center_index()) k.weights[static_cast<std::size_t>(i)] /= s;
  }
  return k;
}

Kernel init_kernel(InitScheme scheme, int size, std::mt19937_64& rng) {
  switch (scheme) {
    case InitScheme::kRandom: return init_random(size, rng);
    case InitScheme::kRandomSum: return init_random_sum(size, rng);
    case InitScheme::kLaplaceLike: return init_laplace_like(size);
    case InitScheme::kLaplaceLikeD: return init_laplace_like_d(size);
  }
  throw std::logic_error("unhandled init scheme");
}

ProjectionStatus project_improved(Kernel& kernel, CenterRule rule) {
  const auto center = static_cast<std::size_t>(kernel.center_index());
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < kernel.weights.size(); ++i) {
    if (i != center) abs_sum += std::abs(kernel.weights[i]);
  }
  if (abs_sum == 0.0) return ProjectionStatus::kDegenerate;

  double clamped_sum = 0.0;
  for (std::size_t i = 0; i < kernel.weights.size(); ++i) {
    if (i == center) continue;
    double w = kernel.weights[i] / abs_sum;
    if (w <= kMinNonCenterWeight) w = kMinNonCenterWeight;
    kernel.weights[i] = w;
    clamped_sum += w;
  }
  kernel.weights[center] = rule == CenterRule::kNegativeSum ? -clamped_sum : -abs_sum;
  return ProjectionStatus::kApplied;
}

ProjectionStatus project_original(Kernel& kernel) {
  const auto center = static_cast<std::size_t>(kernel.center_index());
  double signed_sum = 0.0;
  for (std::size_t i = 0; i < kernel.weights.size(); ++i) {
    if (i != center) signed_sum += kernel.weights[i];
  }
  if (signed_sum == 0.0) return ProjectionStatus::kDegenerate;
  for (std::size_t i = 0; i < kernel.weights.size(); ++i) {
    if (i != center) kernel.weights[i] /= signed_sum;
  }
  kernel.weights[center] = -1.0;
  return ProjectionStatus::kApplied;
}

ConstrainedKernelBank::ConstrainedKernelBank(std::vector<Kernel> kernels, InitScheme scheme, ProjectionMode mode,
                                             ChannelMapping mapping, CenterRule rule, std::uint64_t seed)
    : kernels_(std::move(kernels)), scheme_(scheme), mode_(mode), mapping_(mapping), rule_(rule), reinit_rng_(seed) {
  const std::size_t expected = mapping_ == ChannelMapping::kDiagonal ? 3 : 9;
  if (kernels_.size() != expected) {
    throw std::invalid_argument(
        fmt::format("constrained bank with {} mapping needs {} kernels, got {}",
                    mapping_ == ChannelMapping::kDiagonal ? "diagonal" : "dense", expected, kernels_.size()));
  }
  for (const auto& k : kernels_) {
    require_odd(k.size);
    if (k.weights.size() != static_cast<std::size_t>(k.size * k.size)) {
      throw std::invalid_argument("kernel weight count does not match its size");
    }
  }
}

ConstrainedKernelBank ConstrainedKernelBank::create(std::vector<int> sizes, InitScheme scheme, ProjectionMode mode,
                                                    std::uint64_t seed, ChannelMapping mapping, CenterRule rule) {
  const std::size_t count = mapping == ChannelMapping::kDiagonal ? 3 : 9;
  if (sizes.size() == 1) sizes.assign(count, sizes.front());
  if (sizes.size() != count) {
    throw std::invalid_argument(fmt::format("expected 1 or {} kernel sizes, got {}", count, sizes.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<Kernel> kernels;
  kernels.reserve(count);
  for (int s : sizes) kernels.push_back(init_kernel(scheme, s, rng));
  return ConstrainedKernelBank(std::move(kernels), scheme, mode, mapping, rule, seed ^ 0x9e3779b97f4a7c15ULL);
}

int ConstrainedKernelBank::max_size() const {
  int m = 0;
  for (const auto& k : kernels_) m = std::max(m, k.size);
  return m;
}

bool ConstrainedKernelBank::uniform_size() const {
  return std::all_of(kernels_.begin(), kernels_.end(), [&](const Kernel& k) { return k.size == kernels_[0].size; });
}

int ConstrainedKernelBank::project() {
  int degenerate = 0;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    Kernel& k = kernels_[i];
    if (mode_ == ProjectionMode::kImproved) {
      if (project_improved(k, rule_) == ProjectionStatus::kDegenerate) {
        ++degenerate;
        spdlog::warn("constrained kernel {} has all non-center weights zero; re-initializing as {}", i,
                     to_string(scheme_));
        k = init_kernel(scheme_, k.size, reinit_rng_);
      }
    } else if (project_original(k) == ProjectionStatus::kDegenerate) {
      ++degenerate;
      spdlog::warn("constrained kernel {} has non-center sum exactly 0; projection skipped", i);
    }
  }
  return degenerate;
}

Tensor ConstrainedKernelBank::weight_tensor() const {
  const int big = max_size();
  const std::int64_t in_per_out = mapping_ == ChannelMapping::kDiagonal ? 1 : 3;
  const Shape shape{3, in_per_out, big, big};
  std::vector<double> w(shape.numel(), 0.0);
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const Kernel& k = kernels_[i];
    const int off = (big - k.size) / 2;
    double* dst = w.data() + i * static_cast<std::size_t>(big * big);
    for (int r = 0; r < k.size; ++r) {
      for (int c = 0; c < k.size; ++c) dst[(r + off) * big + c + off] = k.weights[static_cast<std::size_t>(r * k.size + c)];
    }
  }
  return Tensor::parameter(shape, std::move(w));
}

std::vector<double> ConstrainedKernelBank::kernel_gradient(std::span<const double> weight_grad, std::size_t i) const {
  const int big = max_size();
  const Kernel& k = kernels_[i];
  const int off = (big - k.size) / 2;
  std::vector<double> g(static_cast<std::size_t>(k.size * k.size));
  if (weight_grad.empty()) return g;
  const double* src = weight_grad.data() + i * static_cast<std::size_t>(big * big);
  for (int r = 0; r < k.size; ++r) {
    for (int c = 0; c < k.size; ++c) g[static_cast<std::size_t>(r * k.size + c)] = src[(r + off) * big + c + off];
  }
  return g;
}

void ConstrainedKernelBank::write(std::ostream& out) const {
  std::string sizes;
  if (uniform_size()) {
    sizes = std::to_string(kernels_.front().size);
  } else {
    for (std::size_t i = 0; i < kernels_.size(); ++i) sizes += (i ? "," : "") + std::to_string(kernels_[i].size);
  }
  out << sizes << ' ' << kernels_.size() << ' ' << to_string(scheme_) << ' ' << to_string(mode_) << '\n';
  for (const auto& k : kernels_) {
    for (int r = 0; r < k.size; ++r) {
      for (int c = 0; c < k.size; ++c) {
        out << (c ? " " : "") << fmt::format("{:.17g}", k.weights[static_cast<std::size_t>(r * k.size + c)]);
      }
      out << '\n';
    }
  }
}

ConstrainedKernelBank ConstrainedKernelBank::read(std::istream& in) {
  std::string sizes_field, scheme_field, mode_field;
  std::size_t count = 0;
  if (!(in >> sizes_field >> count >> scheme_field >> mode_field)) {
    throw std::runtime_error("kernel bank: malformed header, expected `k K scheme mode`");
  }
  std::vector<int> sizes;
  std::stringstream ss(sizes_field);
  for (std::string part; std::getline(ss, part, ',');) sizes.push_back(std::stoi(part));
  if (sizes.size() == 1) sizes.assign(count, sizes.front());
  if (sizes.size() != count) throw std::runtime_error("kernel bank: size list does not match kernel count");

  std::vector<Kernel> kernels;
  for (std::size_t i = 0; i < count; ++i) {
    Kernel k{sizes[i], std::vector<double>(static_cast<std::size_t>(sizes[i] * sizes[i]))};
    for (auto& w : k.weights) {
      std::string token;
      if (!(in >> token)) throw std::runtime_error(fmt::format("kernel bank: truncated data in kernel {}", i));
      w = std::stod(token);
    }
    kernels.push_back(std::move(k));
  }
  const ChannelMapping mapping = count == 9 ? ChannelMapping::kDense : ChannelMapping::kDiagonal;
  return ConstrainedKernelBank(std::move(kernels), parse_init_scheme(scheme_field), parse_projection_mode(mode_field),
                               mapping);
}

void ConstrainedKernelBank::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write kernel bank " + path);
  write(out);
}

ConstrainedKernelBank ConstrainedKernelBank::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read kernel bank " + path);
  return read(in);
}

Tensor extract_noise(const ConstrainedKernelBank& bank, const Tensor& weights, const Tensor& image) {
  if (image.shape().c != 3) throw ShapeError("extract_noise expects 3 image channels, got " + image.shape().str());
  const int groups = bank.mapping() == ChannelMapping::kDiagonal ? 3 : 1;
  return ops::conv2d(image, weights, Tensor(), {1, bank.max_size() / 2, groups});
}

Tensor extract_noise(const ConstrainedKernelBank& bank, const Tensor& image) {
  return extract_noise(bank, bank.weight_tensor(), image);
}

}  // namespace nedb
