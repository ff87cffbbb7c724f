#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nedb {

inline constexpr double kDefaultThreshold = 0.5;

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  Confusion& operator+=(const Confusion& o);
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Scores >= threshold count as positive.
Confusion confusion(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    double threshold = kDefaultThreshold);
/// Zero-denominator ratios are 0.
Prf prf_from(const Confusion& c);
Prf prf1(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold = kDefaultThreshold);

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counting 1/2.
/// Empty when either class is absent.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

enum class Averaging { kPerImage, kPooled };

struct ImageMetrics {
  std::string id;
  Prf prf;
  std::optional<double> auc;
};

struct MetricReport {
  double threshold = kDefaultThreshold;
  Averaging averaging = Averaging::kPerImage;
  std::vector<ImageMetrics> images;
  Prf mean_prf;
  /// Mean over images with a defined AUC (per-image) or pooled AUC.
  std::optional<double> mean_auc;
  std::size_t auc_excluded = 0;
};

/// Collects per-image results in insertion order.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(double threshold = kDefaultThreshold, Averaging averaging = Averaging::kPerImage)
      : threshold_(threshold), averaging_(averaging) {}

  void add(const std::string& id, std::span<const double> scores, std::span<const std::uint8_t> labels);
  MetricReport finish() const;

 private:
  double threshold_;
  Averaging averaging_;
  std::vector<ImageMetrics> images_;
  Confusion pooled_;
  std::vector<double> pooled_scores_;
  std::vector<std::uint8_t> pooled_labels_;
};

/// `image_id,precision,recall,f1,auc` rows, then a MEAN row; 6 decimals, an
/// undefined AUC prints as `nan`.
void write_metrics_csv(const MetricReport& report, std::ostream& out);

}  // namespace nedb
