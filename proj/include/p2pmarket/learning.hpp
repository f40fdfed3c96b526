#ifndef P2PMARKET_LEARNING_HPP
#define P2PMARKET_LEARNING_HPP

// Per-agent bandit state, the normalized round reward, and the UCB1, UCB2
// and epsilon-greedy arm-selection policies.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "p2pmarket/market.hpp"

namespace p2pmarket {

enum class Policy { UCB1, UCB2, EpsGreedy };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::UCB1: return "ucb1";
    case Policy::UCB2: return "ucb2";
    case Policy::EpsGreedy: return "eps-greedy";
  }
  return "?";
}

struct PolicyParams {
  double epsilon = 0.1;  // eps-greedy exploration probability, in (0,1)
  double alpha = 0.1;    // UCB2 epoch growth, > 0
};

struct LearnerState {
  std::vector<std::uint64_t> pull_counts;
  std::vector<double> avg_rewards;
  std::uint64_t total_pulls = 0;
  std::vector<std::uint32_t> ucb2_epochs;
  Policy policy = Policy::UCB1;
  // UCB2 epoch in progress: the committed arm and the plays still owed to it.
  std::size_t committed_arm = 0;
  std::uint64_t commit_remaining = 0;

  static LearnerState fresh(std::size_t arms, Policy policy) {
    LearnerState s;
    s.pull_counts.assign(arms, 0);
    s.avg_rewards.assign(arms, 0.0);
    s.ucb2_epochs.assign(arms, 0);
    s.policy = policy;
    return s;
  }

  std::size_t arms() const { return pull_counts.size(); }
};

struct PricedQuantity {
  Quantity quantity;
  Price price;
};

/// What one agent got out of a round: its net position, the auction fills
/// (positive magnitudes) and the remainder traded with the utility.
struct RoundResult {
  SignedQuantity signed_quantity;
  std::span<const PricedQuantity> fills;
  Quantity utility_quantity;
};

/// (lower, upper) payoff: everything traded at the agent's own utility rate,
/// or everything at the counterparty's rate.
inline std::pair<Money, Money> payoff_bounds(SignedQuantity q, const MarketConstants& c) {
  if (q.value.count() == 0) {
    throw MarketError(Errc::ZeroQuantity, "payoff bounds undefined at zero quantity");
  }
  if (q.is_buyer()) return {c.p_ur * q.value, c.p_fit * q.value};
  return {c.p_fit * q.value, c.p_ur * q.value};
}

/// Realized payoff: auction fills plus utility trades, buyer quantities negative.
inline Money realized_payoff(const RoundResult& r, const MarketConstants& c) {
  const bool buyer = r.signed_quantity.is_buyer();
  Money total;
  for (const auto& f : r.fills) {
    total += buyer ? -(f.price * f.quantity) : f.price * f.quantity;
  }
  const auto utility_price = buyer ? c.p_ur : c.p_fit;
  total += buyer ? -(utility_price * r.utility_quantity) : utility_price * r.utility_quantity;
  return total;
}

/// Payoff rescaled to [0,1]. The volume-weighted fill price selects the
/// branch: below P_FIT the buyer gets 1 and the seller 0, above P_UR the
/// reverse, in between the linear rescaling. No fills gives 0.
inline double normalized_reward(const RoundResult& r, const MarketConstants& c) {
  const auto [lower, upper] = payoff_bounds(r.signed_quantity, c);
  const bool buyer = r.signed_quantity.is_buyer();
  Quantity filled;
  Money value;
  for (const auto& f : r.fills) {
    filled += f.quantity;
    value += f.price * f.quantity;
  }
  if (filled.count() == 0) return 0.0;
  // Compare the volume-weighted price with the bounds without dividing.
  if (value < c.p_fit * filled) return buyer ? 1.0 : 0.0;
  if (c.p_ur * filled < value) return buyer ? 0.0 : 1.0;
  const auto payoff = realized_payoff(r, c);
  const double pi = static_cast<double>((payoff - lower).count()) /
                    static_cast<double>((upper - lower).count());
  return std::min(1.0, std::max(0.0, pi));
}

namespace detail {

inline std::size_t first_unpulled(const LearnerState& s) {
  for (std::size_t m = 0; m < s.arms(); ++m) {
    if (s.pull_counts[m] == 0) return m;
  }
  return s.arms();
}

inline std::size_t argmax_mean(const LearnerState& s) {
  std::size_t best = 0;
  for (std::size_t m = 1; m < s.arms(); ++m) {
    if (s.avg_rewards[m] > s.avg_rewards[best]) best = m;
  }
  return best;
}

}  // namespace detail

/// Unpulled arms first (lowest index), then argmax of mean + sqrt(2 ln n / n_m).
inline std::size_t select_arm_ucb1(const LearnerState& s) {
  if (const auto m = detail::first_unpulled(s); m < s.arms()) return m;
  const double log_n = std::log(static_cast<double>(s.total_pulls));
  std::size_t best = 0;
  double best_index = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < s.arms(); ++m) {
    const double index =
        s.avg_rewards[m] + std::sqrt(2.0 * log_n / static_cast<double>(s.pull_counts[m]));
    if (index > best_index) {
      best_index = index;
      best = m;
    }
  }
  return best;
}

/// tau(r) = ceil((1 + alpha)^r).
inline std::uint64_t ucb2_tau(double alpha, std::uint32_t r) {
  return static_cast<std::uint64_t>(std::ceil(std::pow(1.0 + alpha, static_cast<double>(r))));
}

struct Ucb2Choice {
  std::size_t arm = 0;
  std::uint64_t commit = 1;  // plays owed to `arm`, including this one
  bool opens_epoch = false;  // false during the play-each-arm-once phase
};

inline Ucb2Choice select_arm_ucb2(const LearnerState& s, const PolicyParams& params) {
  if (const auto m = detail::first_unpulled(s); m < s.arms()) return {m, 1, false};
  const double n = static_cast<double>(s.total_pulls);
  std::size_t best = 0;
  double best_index = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < s.arms(); ++m) {
    const double tau = static_cast<double>(ucb2_tau(params.alpha, s.ucb2_epochs[m]));
    const double log_term = std::max(0.0, std::log(std::exp(1.0) * n / tau));
    const double bonus = std::sqrt((1.0 + params.alpha) * log_term / (2.0 * tau));
    const double index = s.avg_rewards[m] + bonus;
    if (index > best_index) {
      best_index = index;
      best = m;
    }
  }
  const auto r = s.ucb2_epochs[best];
  const auto length = ucb2_tau(params.alpha, r + 1) - ucb2_tau(params.alpha, r);
  return {best, std::max<std::uint64_t>(length, 1), true};
}

/// With probability 1−eps the best mean so far; otherwise a uniform pick among
/// the other arms. `explore_draw` and `arm_draw` are uniforms in [0,1).
inline std::size_t select_arm_eps_greedy(const LearnerState& s, const PolicyParams& params,
                                         double explore_draw, double arm_draw) {
  const auto best = detail::argmax_mean(s);
  if (!(explore_draw < params.epsilon) || s.arms() < 2) return best;
  const auto others = s.arms() - 1;
  auto pick = static_cast<std::size_t>(arm_draw * static_cast<double>(others));
  if (pick >= others) pick = others - 1;
  return pick < best ? pick : pick + 1;
}

/// Picks this round's arm and advances any UCB2 epoch bookkeeping.
inline std::size_t next_arm(LearnerState& s, const PolicyParams& params, double explore_draw,
                            double arm_draw) {
  switch (s.policy) {
    case Policy::UCB1: return select_arm_ucb1(s);
    case Policy::EpsGreedy: return select_arm_eps_greedy(s, params, explore_draw, arm_draw);
    case Policy::UCB2: {
      if (s.commit_remaining > 0) {
        --s.commit_remaining;
        return s.committed_arm;
      }
      const auto choice = select_arm_ucb2(s, params);
      if (choice.opens_epoch) {
        s.committed_arm = choice.arm;
        s.commit_remaining = choice.commit - 1;
        ++s.ucb2_epochs[choice.arm];
      }
      return choice.arm;
    }
  }
  return 0;
}

inline void update_state(LearnerState& s, std::size_t arm, double reward) {
  if (!(reward >= 0.0 && reward <= 1.0)) {
    throw MarketError(Errc::RewardRangeViolation, "reward outside [0,1]");
  }
  if (arm >= s.arms()) {
    throw MarketError(Errc::PreconditionViolation, "arm index out of range");
  }
  const auto n = ++s.pull_counts[arm];
  s.avg_rewards[arm] += (reward - s.avg_rewards[arm]) / static_cast<double>(n);
  ++s.total_pulls;
}

}  // namespace p2pmarket

#endif  // P2PMARKET_LEARNING_HPP
