#include "nedb/metrics.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace nedb {
namespace {

std::string fixed(double v) { return fmt::format("{:.6f}", v); }
std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : "nan"; }

void require_same_length(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument(fmt::format("metrics: {} scores vs {} labels", scores.size(), labels.size()));
  }
}

}  // namespace

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

Confusion confusion(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  require_same_length(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) {
      ++c.tp;
    } else if (predicted) {
      ++c.fp;
    } else if (actual) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Prf prf_from(const Confusion& c) {
  Prf r;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) r.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = tp / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

Prf prf1(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  return prf_from(confusion(scores, labels, threshold));
}

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require_same_length(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average 1-based ranks over tie groups.
  double positive_rank_sum = 0.0;
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

void MetricAccumulator::add(const std::string& id, std::span<const double> scores,
                            std::span<const std::uint8_t> labels) {
  const Confusion c = confusion(scores, labels, threshold_);
  images_.push_back({id, prf_from(c), auc(scores, labels)});
  if (averaging_ == Averaging::kPooled) {
    pooled_ += c;
    pooled_scores_.insert(pooled_scores_.end(), scores.begin(), scores.end());
    pooled_labels_.insert(pooled_labels_.end(), labels.begin(), labels.end());
  }
}

MetricReport MetricAccumulator::finish() const {
  MetricReport r;
  r.threshold = threshold_;
  r.averaging = averaging_;
  r.images = images_;
  for (const auto& im : images_) {
    if (!im.auc) ++r.auc_excluded;
  }
  if (averaging_ == Averaging::kPooled) {
    r.mean_prf = prf_from(pooled_);
    r.mean_auc = auc(pooled_scores_, pooled_labels_);
    return r;
  }
  if (!images_.empty()) {
    double auc_sum = 0.0;
    std::size_t auc_count = 0;
    for (const auto& im : images_) {
      r.mean_prf.precision += im.prf.precision;
      r.mean_prf.recall += im.prf.recall;
      r.mean_prf.f1 += im.prf.f1;
      if (im.auc) {
        auc_sum += *im.auc;
        ++auc_count;
      }
    }
    const double n = static_cast<double>(images_.size());
    r.mean_prf.precision /= n;
    r.mean_prf.recall /= n;
    r.mean_prf.f1 /= n;
    if (auc_count > 0) r.mean_auc = auc_sum / static_cast<double>(auc_count);
  }
  return r;
}

void write_metrics_csv(const MetricReport& report, std::ostream& out) {
  out << "image_id,precision,recall,f1,auc\n";
  for (const auto& im : report.images) {
    out << im.id << ',' << fixed(im.prf.precision) << ',' << fixed(im.prf.recall) << ',' << fixed(im.prf.f1) << ','
        << fixed(im.auc) << '\n';
  }
  out << "MEAN," << fixed(report.mean_prf.precision) << ',' << fixed(report.mean_prf.recall) << ','
      << fixed(report.mean_prf.f1) << ',' << fixed(report.mean_auc) << '\n';
}

}  // namespace nedb
