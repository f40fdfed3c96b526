#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "p2pmarket/learning.hpp"
#include "p2pmarket/rng.hpp"

using namespace p2pmarket;

namespace {

const MarketConstants kC = default_constants();

double reward(double q, std::vector<PricedQuantity> fills) {
  Quantity filled;
  for (const auto& f : fills) filled += f.quantity;
  const SignedQuantity sq{kwh(q)};
  return normalized_reward({sq, fills, sq.magnitude() - filled}, kC);
}

LearnerState state(std::vector<double> avg, std::vector<std::uint64_t> counts, Policy p = Policy::UCB1) {
  auto s = LearnerState::fresh(avg.size(), p);
  s.avg_rewards = std::move(avg);
  s.pull_counts = std::move(counts);
  s.total_pulls = std::accumulate(s.pull_counts.begin(), s.pull_counts.end(), std::uint64_t{0});
  return s;
}

}  // namespace

TEST(PayoffBounds, BuyerAndSeller) {
  const auto [bl, bu] = payoff_bounds({kwh(-2)}, kC);
  EXPECT_EQ(bl, -(cents(22) * kwh(1)));
  EXPECT_EQ(bu, -(cents(10) * kwh(1)));
  const auto [sl, su] = payoff_bounds({kwh(2)}, kC);
  EXPECT_EQ(sl, cents(10) * kwh(1));
  EXPECT_EQ(su, cents(22) * kwh(1));
}

TEST(PayoffBounds, NearlyEqualRates) {
  auto c = kC;
  c.p_fit = c.p_ur - Price::raw(1);
  const auto [lo, hi] = payoff_bounds({kwh(-1)}, c);
  EXPECT_EQ((hi - lo).count(), QuantityTag::scale);
}

TEST(PayoffBounds, ZeroQuantity) {
  try {
    payoff_bounds({}, kC);
    FAIL();
  } catch (const MarketError& e) {
    EXPECT_EQ(e.code(), Errc::ZeroQuantity);
  }
}

TEST(NormalizedReward, WorkedExamples) {
  EXPECT_DOUBLE_EQ(reward(-2, {{kwh(2), cents(8)}}), 0.5);
  EXPECT_DOUBLE_EQ(reward(-2, {{kwh(1), cents(8)}}), 0.25);
  EXPECT_DOUBLE_EQ(reward(2, {}), 0.0);
  EXPECT_DOUBLE_EQ(reward(-2, {}), 0.0);
  EXPECT_DOUBLE_EQ(reward(2, {{kwh(2), cents(12)}}), 1.0);
}

TEST(NormalizedReward, OutOfBandBranches) {
  EXPECT_DOUBLE_EQ(reward(-1, {{kwh(1), cents(3)}}), 1.0);
  EXPECT_DOUBLE_EQ(reward(1, {{kwh(1), cents(3)}}), 0.0);
  EXPECT_DOUBLE_EQ(reward(-1, {{kwh(1), cents(13)}}), 0.0);
  EXPECT_DOUBLE_EQ(reward(-1, {{kwh(1), cents(11)}}), 0.0);
  EXPECT_DOUBLE_EQ(reward(1, {{kwh(1), cents(5)}}), 0.0);
}

TEST(NormalizedReward, MixedFillsBranchOnWeightedPrice) {
  // Weighted price 5.5 lies inside the band even though one fill is below it.
  EXPECT_NEAR(reward(2, {{kwh(1), cents(4)}, {kwh(1), cents(7)}}), (11.0 - 10.0) / 12.0, 1e-12);
  // Weighted price 4 is below P_FIT.
  EXPECT_DOUBLE_EQ(reward(2, {{kwh(1), cents(3)}, {kwh(1), cents(5)}}), 0.0);
}

TEST(NormalizedReward, AlwaysInUnitInterval) {
  SplitMix64 rng(3);
  for (int i = 0; i < 20000; ++i) {
    const double q = (rng.uniform() < 0.5 ? -1 : 1) * (0.1 + 3 * rng.uniform());
    std::vector<PricedQuantity> fills;
    double left = std::fabs(q);
    while (left > 0.05 && rng.uniform() < 0.7) {
      const double part = std::min(left, 0.05 + rng.uniform() * left);
      fills.push_back({kwh(part), cents(20 * rng.uniform())});
      left -= part;
    }
    const double r = reward(q, fills);
    ASSERT_GE(r, 0.0);
    ASSERT_LE(r, 1.0);
  }
}

TEST(NormalizedReward, MonotoneInFillPrice) {
  double last_buyer = 2.0;
  double last_seller = -1.0;
  for (double p = 5.0; p <= 11.0; p += 0.25) {
    const double b = reward(-1.5, {{kwh(1.5), cents(p)}});
    const double s = reward(1.5, {{kwh(1.5), cents(p)}});
    EXPECT_LE(b, last_buyer);
    EXPECT_GE(s, last_seller);
    last_buyer = b;
    last_seller = s;
  }
}

TEST(Ucb1, FreshStatePlaysArmZero) {
  EXPECT_EQ(select_arm_ucb1(LearnerState::fresh(15, Policy::UCB1)), 0u);
}

TEST(Ucb1, ExplorationBonusWins) {
  EXPECT_EQ(select_arm_ucb1(state({0.5, 0.4}, {10, 2})), 1u);
}

TEST(Ucb1, DominantMeanWins) {
  EXPECT_EQ(select_arm_ucb1(state({0.9, 0.1}, {100, 100})), 0u);
}

TEST(Ucb1, PlaysEveryArmWithinFirstM) {
  auto s = LearnerState::fresh(15, Policy::UCB1);
  std::vector<int> seen(15, 0);
  for (int i = 0; i < 15; ++i) {
    const auto arm = select_arm_ucb1(s);
    seen[arm] = 1;
    update_state(s, arm, 0.3);
  }
  EXPECT_EQ(std::accumulate(seen.begin(), seen.end(), 0), 15);
}

TEST(Ucb1, ShiftInvariant) {
  SplitMix64 rng(9);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> avg(6);
    std::vector<std::uint64_t> counts(6);
    for (std::size_t m = 0; m < 6; ++m) {
      avg[m] = 0.5 * rng.uniform();
      counts[m] = static_cast<std::uint64_t>(rng.range(1, 50));
    }
    const auto a = select_arm_ucb1(state(avg, counts));
    for (auto& x : avg) x += 0.25;
    EXPECT_EQ(select_arm_ucb1(state(avg, counts)), a);
  }
}

TEST(Ucb2, TauArithmetic) {
  EXPECT_EQ(ucb2_tau(0.1, 0), 1u);
  EXPECT_EQ(ucb2_tau(0.1, 1), 2u);
  EXPECT_EQ(ucb2_tau(0.1, 10), 3u);
  EXPECT_EQ(ucb2_tau(0.1, 11), 3u);
}

TEST(Ucb2, FreshStateAndCommitLengths) {
  const PolicyParams params;
  const auto fresh = select_arm_ucb2(LearnerState::fresh(15, Policy::UCB2), params);
  EXPECT_EQ(fresh.arm, 0u);
  EXPECT_EQ(fresh.commit, 1u);
  EXPECT_FALSE(fresh.opens_epoch);

  auto s = state({0.9, 0.1}, {5, 5}, Policy::UCB2);
  auto c = select_arm_ucb2(s, params);
  EXPECT_EQ(c.arm, 0u);
  EXPECT_EQ(c.commit, 1u);  // tau(1) - tau(0)
  EXPECT_TRUE(c.opens_epoch);
  s.ucb2_epochs = {10, 10};
  c = select_arm_ucb2(s, params);
  EXPECT_EQ(c.arm, 0u);
  EXPECT_EQ(c.commit, 1u);  // ceiling collision: 3 - 3 becomes 1
}

TEST(Ucb2, ReplaysCommittedArm) {
  PolicyParams params;
  params.alpha = 1.0;  // tau: 1, 2, 4, 8
  auto s = state({0.9, 0.1}, {5, 5}, Policy::UCB2);
  s.ucb2_epochs = {2, 2};
  const auto first = next_arm(s, params, 0.0, 0.0);
  EXPECT_EQ(first, 0u);
  EXPECT_EQ(s.commit_remaining, 3u);  // tau(3) - tau(2) = 4 plays, one done
  EXPECT_EQ(s.ucb2_epochs[0], 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(next_arm(s, params, 0.0, 0.0), 0u);
  EXPECT_EQ(s.commit_remaining, 0u);
}

TEST(EpsGreedy, PureExploitation) {
  PolicyParams params;
  params.epsilon = 1e-12;
  const auto s = state({0.2, 0.9}, {1, 1}, Policy::EpsGreedy);
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(select_arm_eps_greedy(s, params, rng.uniform(), rng.uniform()), 1u);
}

TEST(EpsGreedy, PureExplorationAvoidsArgmax) {
  PolicyParams params;
  params.epsilon = 1.0 - 1e-12;
  std::vector<double> avg(15, 0.1);
  avg[6] = 0.8;
  const auto s = state(avg, std::vector<std::uint64_t>(15, 1), Policy::EpsGreedy);
  std::vector<int> hits(15, 0);
  SplitMix64 rng(2);
  const int n = 140000;
  for (int i = 0; i < n; ++i) ++hits[select_arm_eps_greedy(s, params, 0.0, rng.uniform())];
  EXPECT_EQ(hits[6], 0);
  for (std::size_t m = 0; m < 15; ++m) {
    if (m != 6) EXPECT_NEAR(hits[m] / double(n), 1.0 / 14.0, 0.005);
  }
}

TEST(EpsGreedy, ExploitFrequency) {
  const PolicyParams params;  // eps = 0.1
  const auto s = state({0.2, 0.9}, {1, 1}, Policy::EpsGreedy);
  SplitMix64 rng(4);
  int best = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) best += select_arm_eps_greedy(s, params, rng.uniform(), rng.uniform()) == 1;
  EXPECT_NEAR(best / double(n), 0.9, 0.01);
}

TEST(Update, IncrementalMean) {
  auto s = LearnerState::fresh(3, Policy::UCB1);
  update_state(s, 1, 0.5);
  EXPECT_EQ(s.pull_counts[1], 1u);
  EXPECT_DOUBLE_EQ(s.avg_rewards[1], 0.5);
  s = state({0.0, 0.4, 0.0}, {0, 3, 0});
  update_state(s, 1, 0.8);
  EXPECT_EQ(s.pull_counts[1], 4u);
  EXPECT_NEAR(s.avg_rewards[1], 0.5, 1e-12);
  EXPECT_EQ(s.total_pulls, 4u);
  EXPECT_DOUBLE_EQ(s.avg_rewards[0], 0.0);
}

TEST(Update, RejectsOutOfRange) {
  auto s = LearnerState::fresh(3, Policy::UCB1);
  try {
    update_state(s, 0, 1.2);
    FAIL();
  } catch (const MarketError& e) {
    EXPECT_EQ(e.code(), Errc::RewardRangeViolation);
  }
  EXPECT_THROW(update_state(s, 7, 0.5), MarketError);
}

TEST(Update, OrderIndependent) {
  SplitMix64 rng(12);
  std::vector<std::pair<std::size_t, double>> events;
  for (int i = 0; i < 300; ++i) {
    events.emplace_back(static_cast<std::size_t>(rng.range(0, 4)), rng.uniform());
  }
  auto a = LearnerState::fresh(5, Policy::UCB1);
  for (const auto& [arm, r] : events) update_state(a, arm, r);
  std::mt19937 shuffler(7);
  std::shuffle(events.begin(), events.end(), shuffler);
  auto b = LearnerState::fresh(5, Policy::UCB1);
  for (const auto& [arm, r] : events) update_state(b, arm, r);
  EXPECT_EQ(a.pull_counts, b.pull_counts);
  EXPECT_EQ(a.total_pulls, b.total_pulls);
  for (std::size_t m = 0; m < 5; ++m) EXPECT_NEAR(a.avg_rewards[m], b.avg_rewards[m], 1e-12);
}
