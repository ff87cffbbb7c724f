#include <gtest/gtest.h>

#include <cmath>

#include "nedb/distance_attention.hpp"
#include "nedb/gradcheck.hpp"
#include "nedb/ops.hpp"

using namespace nedb;

TEST(DistanceMatrix, TwoByTwoValues) {
  const auto d = build_distance_matrix(2, 2);
  const double s = 1.0 + std::sqrt(2.0);
  const std::vector<double> want{1, 2, 2, s, 2, 1, s, 2, 2, s, 1, 2, s, 2, 2, 1};
  ASSERT_EQ(d.values.shape(), (Shape{1, 1, 4, 4}));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(d.values.data()[i], want[i], 1e-15);
}

TEST(DistanceMatrix, SinglePixel) {
  const auto d = build_distance_matrix(1, 1);
  EXPECT_EQ(d.values.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(d.at(0, 0), 1.0);
}

TEST(DistanceMatrix, SymmetricUnitDiagonalAndTranslationInvariant) {
  const auto d = build_distance_matrix(5, 7);
  const std::int64_t p = d.pixels();
  for (std::int64_t i = 0; i < p; ++i) {
    EXPECT_EQ(d.at(i, i), 1.0);
    for (std::int64_t j = 0; j < p; ++j) {
      EXPECT_EQ(d.at(i, j), d.at(j, i));
      EXPECT_GE(d.at(i, j), 1.0);
      const std::int64_t dr = i / 7 - j / 7, dc = i % 7 - j % 7;
      EXPECT_NEAR(d.at(i, j), 1.0 + std::hypot(static_cast<double>(dr), static_cast<double>(dc)), 1e-14);
    }
  }
}

TEST(DistanceMatrix, CapIsEnforced) {
  EXPECT_NO_THROW(build_distance_matrix(64, 64));
  EXPECT_THROW(build_distance_matrix(65, 64), DistanceMatrixTooLarge);
  EXPECT_THROW(build_distance_matrix(4, 4, 15), DistanceMatrixTooLarge);
  EXPECT_THROW(build_distance_matrix(0, 4), std::invalid_argument);
}

TEST(DistanceMatrix, CacheReturnsSameInstance) {
  const auto a = cached_distance_matrix(6, 3);
  const auto b = cached_distance_matrix(6, 3);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_NE(a.get(), cached_distance_matrix(3, 6).get());
}

TEST(AttentionFromCorrelation, EqualScoresFavourNearerKey) {
  // 1 x 3 row, query at pixel 0, all correlations equal.
  const auto d = build_distance_matrix(1, 3);
  const Tensor corr = Tensor::full({1, 1, 3, 3}, 2.0);
  const Tensor a = attention_from_correlation(corr, &d);
  const double e1 = std::exp(2.0), e2 = std::exp(1.0), e3 = std::exp(2.0 / 3.0);
  EXPECT_NEAR(a.at(0, 0, 0, 0), e1 / (e1 + e2 + e3), 1e-15);
  EXPECT_NEAR(a.at(0, 0, 0, 1), e2 / (e1 + e2 + e3), 1e-15);
  EXPECT_GT(a.at(0, 0, 0, 1), a.at(0, 0, 0, 2));
  const Tensor plain = attention_from_correlation(corr, nullptr);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(plain.at(0, 0, 0, j), 1.0 / 3.0, 1e-15);
}

TEST(AttentionFromCorrelation, RowsAreDistributions) {
  std::mt19937_64 rng(4);
  const auto d = build_distance_matrix(4, 4);
  const Tensor corr = random_tensor({2, 1, 16, 16}, rng, -5.0, 5.0);
  const Tensor a = attention_from_correlation(corr, &d);
  for (int n = 0; n < 2; ++n) {
    for (int i = 0; i < 16; ++i) {
      double s = 0.0;
      for (int j = 0; j < 16; ++j) {
        EXPECT_GT(a.at(n, 0, i, j), 0.0);
        s += a.at(n, 0, i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(AttentionFromCorrelation, PositiveScoresDecreaseWithDistance) {
  // With a constant positive score, weight must fall as distance grows.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.1, 4.0);
  const auto d = build_distance_matrix(5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = attention_from_correlation(Tensor::full({1, 1, 25, 25}, u(rng)), &d);
    const int q = trial % 25;
    for (int j = 0; j < 25; ++j) {
      for (int k = 0; k < 25; ++k) {
        if (d.at(q, j) < d.at(q, k)) EXPECT_GT(a.at(0, 0, q, j), a.at(0, 0, q, k));
      }
    }
  }
}

TEST(AttentionFromCorrelation, NegativeScoresIncreaseWithDistance) {
  const auto d = build_distance_matrix(4, 4);
  const Tensor a = attention_from_correlation(Tensor::full({1, 1, 16, 16}, -1.5), &d);
  for (int q = 0; q < 16; ++q) {
    for (int j = 0; j < 16; ++j) {
      for (int k = 0; k < 16; ++k) {
        if (d.at(q, j) < d.at(q, k)) EXPECT_LT(a.at(0, 0, q, j), a.at(0, 0, q, k));
      }
    }
  }
}

TEST(NonLocal, ChannelDivisibilityChecked) {
  std::mt19937_64 rng(0);
  EXPECT_THROW(NonLocalParams::init(12, rng), std::invalid_argument);
  EXPECT_THROW(NonLocalParams::init(4, rng), std::invalid_argument);
  const auto p = NonLocalParams::init(16, rng);
  EXPECT_EQ(p.query_weight.shape(), (Shape{2, 16, 1, 1}));
  EXPECT_EQ(p.value_weight.shape(), (Shape{16, 16, 1, 1}));
  EXPECT_THROW(attention_forward(p, Tensor::zeros({1, 8, 4, 4}), true), ShapeError);
}

TEST(NonLocal, ForwardPreservesShapeAndCapsPixels) {
  std::mt19937_64 rng(1);
  const auto p = NonLocalParams::init(16, rng);
  const Tensor x = random_tensor({2, 16, 6, 5}, rng);
  EXPECT_EQ(attention_forward(p, x, true).shape(), x.shape());
  EXPECT_EQ(attention_weights(p, x, false).shape(), (Shape{2, 1, 30, 30}));
  EXPECT_THROW(attention_forward(p, x, true, 20), DistanceMatrixTooLarge);
}

TEST(NonLocal, ZeroOutputProjectionIsIdentity) {
  std::mt19937_64 rng(2);
  auto p = NonLocalParams::init(8, rng);
  p.out_weight = Tensor::zeros(p.out_weight.shape());
  p.out_bias = Tensor::zeros(p.out_bias.shape());
  const Tensor x = random_tensor({1, 8, 3, 3}, rng);
  const Tensor y = attention_forward(p, x, true);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(NonLocal, DistanceChangesTheMap) {
  std::mt19937_64 rng(3);
  const auto p = NonLocalParams::init(8, rng);
  const Tensor x = random_tensor({1, 8, 4, 4}, rng);
  const Tensor a = attention_weights(p, x, true), b = attention_weights(p, x, false);
  double diff = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
  EXPECT_GT(diff, 1e-6);
}
