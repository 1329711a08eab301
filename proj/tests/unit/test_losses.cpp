#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_support.hpp"
#include "wsseg/losses/dice.hpp"
#include "wsseg/losses/l2.hpp"
#include "wsseg/losses/mil.hpp"

namespace wsseg::losses {
namespace {

using wsseg::testing::central_difference;
using wsseg::testing::random_binary_map;
using wsseg::testing::random_map;

long double dice_oracle(const Map& p, const Map& t) {
  long double pt = 0, pp = 0, tt = 0;
  for (int r = 0; r < p.rows(); ++r)
    for (int c = 0; c < p.cols(); ++c) {
      pt += static_cast<long double>(p(r, c)) * t(r, c);
      pp += static_cast<long double>(p(r, c)) * p(r, c);
      tt += static_cast<long double>(t(r, c)) * t(r, c);
    }
  return 1.0L - (2.0L * pt + 1.0L) / (pp + tt + 1.0L);
}

// Sorts each grid explicitly and applies the per-rank term.
long double mil_oracle(const MILBatch& b, double eps) {
  long double total = 0;
  std::size_t terms = 0;
  for (std::size_t n = 0; n < b.pooled.size(); ++n) {
    std::vector<double> v(b.pooled[n].begin(), b.pooled[n].end());
    std::sort(v.begin(), v.end(), std::greater<>());
    for (std::size_t j = 0; j < v.size(); ++j) {
      const bool top = b.labels[n] == 1 && j < static_cast<std::size_t>(b.k);
      const long double x = top ? v[j] : 1.0L - v[j];
      total -= std::log(std::clamp<long double>(x, eps, 1.0L));
      ++terms;
    }
  }
  return total / static_cast<long double>(terms);
}

MILBatch random_batch(std::mt19937_64& rng, int n, int k) {
  MILBatch b;
  b.k = k;
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < n; ++i) {
    b.pooled.push_back(random_map(4, 3, rng, 0.001, 0.999));
    b.labels.push_back(coin(rng) ? 1 : 0);
  }
  return b;
}

TEST(Dice, HandComputedExamples) {
  Map p(1, 2), t(1, 2);
  p(0, 0) = p(0, 1) = 0.5;
  t(0, 0) = 1.0;
  EXPECT_NEAR(dice_index(p, t), 2.0 / 2.5, 1e-15);
  EXPECT_NEAR(dice_loss(p, t), 0.2, 1e-15);
  EXPECT_EQ(dice_loss(Map(3, 3), Map(3, 3)), 0.0);
  EXPECT_EQ(dice_loss(t, t), 0.0);
  Map ones(2, 2, 1.0);
  EXPECT_NEAR(dice_loss(ones, Map(2, 2)), 1.0 - 1.0 / 5.0, 1e-15);
}

TEST(Dice, MatchesOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Map p = random_map(1 + trial % 9, 1 + trial % 7, rng);
    const Map t = random_binary_map(p.rows(), p.cols(), rng, 0.3);
    EXPECT_NEAR(dice_loss(p, t), static_cast<double>(dice_oracle(p, t)), 1e-12);
  }
}

TEST(Dice, LossBoundsAndSymmetry) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Map p = random_map(5, 4, rng);
    const Map t = random_binary_map(5, 4, rng);
    const double l = dice_loss(p, t);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 1.0);
    EXPECT_DOUBLE_EQ(l, dice_loss(t, p));
  }
}

TEST(Dice, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Map p = random_map(6, 5, rng);
  const Map t = random_binary_map(6, 5, rng);
  const Map g = dice_loss_grad(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double numeric = central_difference(p.values(), i, 1e-6, [&] { return dice_loss(p, t); });
    EXPECT_NEAR(g.data()[i], numeric, 1e-9);
  }
}

TEST(Dice, RejectsBadInputs) {
  EXPECT_THROW(dice_loss(Map(2, 2), Map(2, 3)), std::invalid_argument);
  Map p(2, 2);
  p(0, 0) = std::nan("");
  EXPECT_THROW(dice_loss(p, Map(2, 2)), std::invalid_argument);
}

TEST(DownsampleMask, HalfCoverageRule) {
  Mask full(4, 4);
  full(0, 0) = full(0, 1) = 1;  // half of the top-left 2x2 block
  full(3, 3) = 1;               // a quarter of the bottom-right block
  const Mask d = downsample_mask(full, 2, 2);
  EXPECT_EQ(d(0, 0), 1);
  EXPECT_EQ(d(1, 1), 0);
  EXPECT_EQ(d(0, 1), 0);
  const Mask same = downsample_mask(full, 4, 4);
  EXPECT_EQ(same, full);
  const Map m = mask_to_map(full);
  EXPECT_EQ(m(0, 1), 1.0);
  EXPECT_EQ(m(1, 1), 0.0);
}

TEST(Mil, HandComputedExample) {
  MILBatch b;
  b.k = 2;
  Map g(1, 3);
  g(0, 0) = 0.2;
  g(0, 1) = 0.9;
  g(0, 2) = 0.5;
  b.pooled = {g, g};
  b.labels = {1, 0};
  const double pos = -(std::log(0.9) + std::log(0.5) + std::log(0.8));
  const double neg = -(std::log(0.8) + std::log(0.1) + std::log(0.5));
  EXPECT_NEAR(mil_loss(b), (pos + neg) / 6.0, 1e-15);
}

TEST(Mil, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto b = random_batch(rng, 1 + trial % 6, 1 + trial % 12);
    EXPECT_NEAR(mil_loss(b), static_cast<double>(mil_oracle(b, kDefaultLogClamp)), 1e-12);
  }
}

TEST(Mil, ClampsSaturatedValues) {
  MILBatch b;
  b.k = 1;
  b.pooled = {Map(1, 2, 0.0), Map(1, 2, 1.0)};
  b.labels = {1, 0};
  EXPECT_NEAR(mil_loss(b), -std::log(1e-7) * 3.0 / 4.0, 1e-12);
  const auto g = mil_loss_grad(b);
  for (const auto& m : g)
    for (double v : m) EXPECT_EQ(v, 0.0);
}

TEST(Mil, NegativeLossIgnoresK) {
  std::mt19937_64 rng(5);
  auto b = random_batch(rng, 3, 1);
  b.labels = {0, 0, 0};
  const double l1 = mil_loss(b);
  b.k = 12;
  EXPECT_DOUBLE_EQ(mil_loss(b), l1);
}

TEST(Mil, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto b = random_batch(rng, 3, 1 + trial);
    const auto g = mil_loss_grad(b);
    for (std::size_t n = 0; n < b.pooled.size(); ++n)
      for (std::size_t i = 0; i < b.pooled[n].size(); ++i) {
        const double numeric =
            central_difference(b.pooled[n].values(), i, 1e-7, [&] { return mil_loss(b); });
        EXPECT_NEAR(g[n].data()[i], numeric, 1e-7 * std::max(1.0, std::abs(numeric)));
      }
  }
}

TEST(Mil, RejectsBadBatches) {
  MILBatch b;
  EXPECT_THROW(mil_loss(b), std::invalid_argument);
  b.pooled = {Map(2, 2, 0.5)};
  b.labels = {2};
  EXPECT_THROW(mil_loss(b), std::invalid_argument);
  b.labels = {1};
  b.k = 5;
  EXPECT_THROW(mil_loss(b), std::invalid_argument);
  b.k = 0;
  EXPECT_THROW(mil_loss(b), std::invalid_argument);
  b.k = 1;
  b.pooled.push_back(Map(1, 2, 0.5));
  b.labels.push_back(0);
  EXPECT_THROW(mil_loss(b), std::invalid_argument);
}

TEST(BinaryCrossEntropy, Values) {
  EXPECT_NEAR(binary_cross_entropy(0.8, 1), -std::log(0.8), 1e-15);
  EXPECT_NEAR(binary_cross_entropy(0.8, 0), -std::log(0.2), 1e-12);
  EXPECT_NEAR(binary_cross_entropy(1.0, 0), -std::log(1e-7), 1e-12);
}

TEST(L2Penalty, KernelsOnly) {
  nn::ParamStore ps;
  const int k = ps.add("k", nn::ParamKind::kernel, {3});
  const int b = ps.add("b", nn::ParamKind::bias, {2});
  const int k2 = ps.add("k2", nn::ParamKind::kernel, {1});
  ps[k].value = {1.0, -2.0, 3.0};
  ps[b].value = {10.0, 10.0};
  ps[k2].value = {4.0};
  EXPECT_NEAR(l2_kernel_penalty(ps, 5e-6), 5e-6 * 30.0, 1e-18);
  const int only[] = {k, b};
  EXPECT_NEAR(l2_kernel_penalty(ps, 5e-6, only), 5e-6 * 14.0, 1e-18);

  nn::Gradients g(ps);
  l2_kernel_penalty_grad(ps, 0.5, g, only);
  EXPECT_EQ(g[k][1], -2.0);
  EXPECT_EQ(g[b][0], 0.0);
  EXPECT_EQ(g[k2][0], 0.0);
  nn::Gradients all(ps);
  l2_kernel_penalty_grad(ps, 0.5, all);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(all[k][i],
                central_difference(ps[k].value, i, 1e-6, [&] { return l2_kernel_penalty(ps, 0.5); }), 1e-8);
  EXPECT_EQ(all[k2][0], 4.0);
}

}  // namespace
}  // namespace wsseg::losses
