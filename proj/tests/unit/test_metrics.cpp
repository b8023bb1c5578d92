#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ppsam/error.hpp"
#include "ppsam/metrics.hpp"
#include "test_support.hpp"

using namespace ppsam;

namespace {

BinaryMask square(int h, int w, int r0, int c0, int side) {
  BinaryMask m(h, w);
  for (int r = r0; r < r0 + side; ++r) {
    for (int c = c0; c < c0 + side; ++c) m.set(r, c, true);
  }
  return m;
}

}  // namespace

TEST(Dice, IdentityDisjointAndShift) {
  const auto a = square(20, 30, 2, 3, 10);
  EXPECT_DOUBLE_EQ(dice(a, a).value, 100.0);
  EXPECT_DOUBLE_EQ(dice(a, square(20, 30, 2, 15, 10)).value, 0.0);
  const auto shifted = square(20, 30, 2, 8, 10);
  EXPECT_DOUBLE_EQ(dice(a, shifted).value, 50.0);
  EXPECT_DOUBLE_EQ(ppsam::testing::count_dice(a, shifted), 50.0);
}

TEST(Dice, BothEmptyScoresFull) {
  EXPECT_DOUBLE_EQ(dice(BinaryMask(4, 4), BinaryMask(4, 4)).value, 100.0);
}

TEST(Dice, ShapeMismatch) {
  try {
    dice(BinaryMask(4, 4), BinaryMask(4, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Dice, RandomPairsMatchPixelCountOracle) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto a = ppsam::testing::random_blob_mask(rng, 24, 32, true);
    const auto b = ppsam::testing::random_blob_mask(rng, 24, 32, true);
    EXPECT_NEAR(dice(a, b).value, ppsam::testing::count_dice(a, b), 1e-9);
    EXPECT_DOUBLE_EQ(dice(a, b).value, dice(b, a).value);
    const double d = dice(a, b).value;
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 100.0);
  }
}

TEST(Iou, RelatesToDice) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto a = ppsam::testing::random_blob_mask(rng, 16, 16);
    const auto b = ppsam::testing::random_blob_mask(rng, 16, 16);
    const double j = iou(a, b);
    EXPECT_NEAR(dice(a, b).value / 100.0, 2 * j / (1 + j), 1e-12);
  }
}

TEST(SoftOverlap, ExactAndEmptyPredictions) {
  BinaryMask gt(2, 2, {1, 1, 0, 0});
  const std::vector<double> exact{1, 1, 0, 0};
  const auto s = soft_dice_and_iou(exact, gt);
  EXPECT_NEAR(s.soft_dice, 1.0, 1e-6);
  EXPECT_NEAR(s.soft_iou, 1.0, 1e-6);
  const std::vector<double> zeros{0, 0, 0, 0};
  const auto z = soft_dice_and_iou(zeros, gt);
  EXPECT_NEAR(z.soft_dice, 0.0, 1e-6);
  EXPECT_NEAR(z.soft_iou, 0.0, 1e-6);
}

TEST(SoftOverlap, HandComputedIou) {
  BinaryMask gt(2, 2, {1, 1, 0, 0});
  const std::vector<double> p{1, 0.5, 0, 0};
  // intersection 1.5, sum p 1.5, sum y 2: iou = 1.5 / (1.5 + 2 - 1.5)
  EXPECT_NEAR(soft_dice_and_iou(p, gt).soft_iou, 0.75, 1e-6);
  EXPECT_NEAR(soft_dice_and_iou(p, gt).soft_dice, 3.0 / 3.5, 1e-6);
}

TEST(SoftOverlap, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    auto gt = ppsam::testing::random_blob_mask(rng, 8, 8);
    std::vector<double> p(64);
    for (auto& v : p) v = u(rng);
    std::vector<double> gd(64), gi(64);
    soft_dice_and_iou(p, gt, gd, gi);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto up = p, dn = p;
      up[i] += h;
      dn[i] -= h;
      const auto a = soft_dice_and_iou(up, gt);
      const auto b = soft_dice_and_iou(dn, gt);
      const double fd_d = (a.soft_dice - b.soft_dice) / (2 * h);
      const double fd_i = (a.soft_iou - b.soft_iou) / (2 * h);
      EXPECT_LT(std::abs(fd_d - gd[i]) / std::max(1e-3, std::abs(fd_d)), 1e-4);
      EXPECT_LT(std::abs(fd_i - gi[i]) / std::max(1e-3, std::abs(fd_i)), 1e-4);
    }
  }
}

TEST(AggregateRuns, Examples) {
  const std::vector<double> one{80};
  auto p = aggregate_runs(std::span<const double>(one), 10);
  EXPECT_DOUBLE_EQ(p.mean_dice, 80);
  EXPECT_DOUBLE_EQ(p.std_dice, 0);
  EXPECT_EQ(p.run_count, 1);
  EXPECT_EQ(p.perturbation_level, 10);
  const std::vector<double> two{70, 90};
  p = aggregate_runs(std::span<const double>(two));
  EXPECT_DOUBLE_EQ(p.mean_dice, 80);
  EXPECT_DOUBLE_EQ(p.std_dice, 10);
}

TEST(AggregateRuns, EmptyThrows) {
  try {
    aggregate_runs(std::span<const double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyRuns);
  }
}

TEST(AggregateRuns, MatchesStreamingOracleAndIgnoresOrder) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 100);
  for (int t = 0; t < 5; ++t) {
    std::vector<double> v(5 + t * 7);
    for (auto& x : v) x = u(rng);
    // Welford's streaming mean/variance.
    double mean = 0, m2 = 0;
    int n = 0;
    for (double x : v) {
      ++n;
      const double d = x - mean;
      mean += d / n;
      m2 += d * (x - mean);
    }
    const auto p = aggregate_runs(std::span<const double>(v));
    EXPECT_NEAR(p.mean_dice, mean, 1e-9);
    EXPECT_NEAR(p.std_dice, std::sqrt(m2 / n), 1e-9);
    auto shuffled = v;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto q = aggregate_runs(std::span<const double>(shuffled));
    EXPECT_EQ(p.mean_dice, q.mean_dice);
    EXPECT_EQ(p.std_dice, q.std_dice);
  }
}
