#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "nedb/losses.hpp"
#include "nedb/metrics.hpp"
#include "nedb/tape.hpp"

using namespace nedb;

namespace {

Tensor plane(int h, int w, std::vector<double> v) { return Tensor({1, 1, h, w}, std::move(v)); }

// Brute-force pair count: P(pos > neg) with ties at 1/2.
double auc_pairs(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] && !y[j]) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return num / den;
}

}  // namespace

TEST(Dice, PerfectPredictionIsZero) {
  const Tensor g = plane(2, 2, {1, 0, 1, 0});
  EXPECT_NEAR(dice_loss(g, g).item(), 0.0, 1e-15);
}

TEST(Dice, DisjointMasks) {
  std::vector<double> p(400, 0.0), g(400, 0.0);
  std::fill(p.begin(), p.begin() + 100, 1.0);
  std::fill(g.begin() + 200, g.begin() + 300, 1.0);
  EXPECT_NEAR(dice_loss(plane(20, 20, p), plane(20, 20, g)).item(), 1.0 - 1.0 / 201.0, 1e-15);
}

TEST(Dice, EmptyBothIsZeroAndHandValue) {
  const Tensor z = plane(2, 2, {0, 0, 0, 0});
  EXPECT_EQ(dice_loss(z, z).item(), 0.0);
  // p = .5 everywhere, g = one pixel: 1 - (2*0.5 + 1) / (4*0.25 + 1 + 1)
  EXPECT_NEAR(dice_loss(plane(2, 2, {.5, .5, .5, .5}), plane(2, 2, {1, 0, 0, 0})).item(), 1.0 - 2.0 / 3.0, 1e-15);
}

TEST(Dice, InputValidation) {
  const Tensor g = plane(1, 2, {1, 0});
  EXPECT_THROW(dice_loss(plane(1, 3, {0, 0, 0}), g), ShapeError);
  EXPECT_THROW(dice_loss(plane(1, 2, {1.2, 0}), g), std::invalid_argument);
  EXPECT_THROW(dice_loss(plane(1, 2, {0.5, 0}), plane(1, 2, {0.5, 0})), std::invalid_argument);
}

TEST(Dice, GradientMatchesClosedForm) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor p = Tensor::parameter({1, 1, 1, 2}, {0.3, 0.8});
  const Tensor g = plane(1, 2, {1, 0});
  const Tensor loss = dice_loss(p, g);
  const auto grads = tape.backward(loss);
  const double num = 2 * 0.3 + 1, den = 0.09 + 0.64 + 1 + 1;
  // d/dp_i of -(num/den)
  EXPECT_NEAR(grads.raw(p)[0], -(2.0 * den - num * 0.6) / (den * den), 1e-12);
  EXPECT_NEAR(grads.raw(p)[1], -(0.0 * den - num * 1.6) / (den * den), 1e-12);
}

TEST(Combined, WeightsRegionAndEdge) {
  EXPECT_NEAR(combine(0.2, 0.3, 0.3), 0.27, 1e-15);
  EXPECT_EQ(combine(0.2, 0.9, 1.0), 0.2);
  const Tensor m = plane(2, 2, {1, 0, 0, 0}), e = plane(1, 1, {1});
  const auto l = combined_loss(plane(2, 2, {.5, .5, .5, .5}), m, plane(1, 1, {0}), e, 0.3);
  EXPECT_NEAR(l.region.item(), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(l.edge.item(), 0.5, 1e-15);
  EXPECT_NEAR(l.total.item(), 0.3 / 3.0 + 0.35, 1e-15);
}

TEST(Prf, HandExample) {
  const std::vector<double> s{0.9, 0.6, 0.4, 0.2, 0.7};
  const std::vector<std::uint8_t> y{1, 0, 1, 0, 1};
  const Confusion c = confusion(s, y);
  EXPECT_EQ(c.tp, 2u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.fn, 1u);
  EXPECT_EQ(c.tn, 1u);
  const Prf p = prf1(s, y);
  EXPECT_NEAR(p.precision, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.recall, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p.f1, 2.0 / 3.0, 1e-15);
}

TEST(Prf, ThresholdIsInclusiveAndEmptyDenominatorsAreZero) {
  const std::vector<double> s{0.5};
  const std::vector<std::uint8_t> y{0};
  EXPECT_EQ(confusion(s, y).fp, 1u);
  const Prf p = prf1(std::vector<double>{0.1}, std::vector<std::uint8_t>{0});
  EXPECT_EQ(p.precision, 0.0);
  EXPECT_EQ(p.recall, 0.0);
  EXPECT_EQ(p.f1, 0.0);
}

TEST(Auc, Examples) {
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_EQ(*auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y), 1.0);
  EXPECT_EQ(*auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 0.0);
  EXPECT_EQ(*auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y), 0.5);
  EXPECT_NEAR(*auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y), 0.75, 1e-15);
  EXPECT_FALSE(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}).has_value());
}

TEST(Auc, MatchesPairwiseOracleAndIsRankInvariant) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> side(1, 8), level(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = side(rng) * side(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> y(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = level(rng) / 10.0;  // coarse levels force ties
      y[i] = static_cast<std::uint8_t>(level(rng) < 4);
    }
    const auto a = auc(s, y);
    const bool both = std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0;
    ASSERT_EQ(a.has_value(), both);
    if (!both) continue;
    EXPECT_NEAR(*a, auc_pairs(s, y), 1e-12);
    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3.0 * v) - 7.0; });
    EXPECT_NEAR(*auc(t, y), *a, 1e-12);
  }
}

TEST(Accumulator, PerImageAndPooled) {
  const std::vector<double> s1{0.9, 0.1}, s2{0.9, 0.9, 0.1, 0.1};
  const std::vector<std::uint8_t> y1{1, 0}, y2{0, 0, 0, 0};
  MetricAccumulator per(0.5, Averaging::kPerImage);
  per.add("a", s1, y1);
  per.add("b", s2, y2);
  const auto r = per.finish();
  ASSERT_EQ(r.images.size(), 2u);
  EXPECT_EQ(r.images[0].id, "a");
  EXPECT_NEAR(r.mean_prf.f1, 0.5, 1e-15);
  EXPECT_EQ(r.auc_excluded, 1u);
  EXPECT_EQ(*r.mean_auc, 1.0);

  MetricAccumulator pooled(0.5, Averaging::kPooled);
  pooled.add("a", s1, y1);
  pooled.add("b", s2, y2);
  const auto q = pooled.finish();
  EXPECT_NEAR(q.mean_prf.precision, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(q.mean_prf.recall, 1.0, 1e-15);
  EXPECT_NEAR(q.mean_prf.f1, 0.5, 1e-15);
  EXPECT_NEAR(*q.mean_auc, 0.8, 1e-15);  // (3 wins + 2 ties / 2) over 5 pairs
}

TEST(MetricsCsv, Format) {
  MetricAccumulator acc;
  acc.add("img0", std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0});
  acc.add("img1", std::vector<double>{0.9}, std::vector<std::uint8_t>{0});
  std::ostringstream out;
  write_metrics_csv(acc.finish(), out);
  EXPECT_EQ(out.str(),
            "image_id,precision,recall,f1,auc\n"
            "img0,1.000000,1.000000,1.000000,1.000000\n"
            "img1,0.000000,0.000000,0.000000,nan\n"
            "MEAN,0.500000,0.500000,0.500000,1.000000\n");
}
