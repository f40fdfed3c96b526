#ifndef P2PMARKET_CLEARING_HPP
#define P2PMARKET_CLEARING_HPP

// Stacked demand/supply curves and the four double-auction clearing rules:
// k-double, Vickrey variant, McAfee and maximum volume matching (MVM).
// Every function here is pure; identical inputs give identical outcomes.

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "p2pmarket/market.hpp"

namespace p2pmarket {

enum class Mechanism { KDouble, VickreyVariant, McAfee, MVM };

inline constexpr Mechanism kAllMechanisms[] = {Mechanism::KDouble, Mechanism::VickreyVariant,
                                               Mechanism::McAfee, Mechanism::MVM};

inline std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::KDouble: return "k-double";
    case Mechanism::VickreyVariant: return "vickrey";
    case Mechanism::McAfee: return "mcafee";
    case Mechanism::MVM: return "mvm";
  }
  return "?";
}

inline std::optional<Mechanism> parse_mechanism(std::string_view s) {
  if (s == "k-double" || s == "kdouble" || s == "k05") return Mechanism::KDouble;
  if (s == "vickrey" || s == "vickrey-variant" || s == "vv") return Mechanism::VickreyVariant;
  if (s == "mcafee") return Mechanism::McAfee;
  if (s == "mvm") return Mechanism::MVM;
  return std::nullopt;
}

struct Contribution {
  AgentId agent = 0;
  Quantity quantity;
};

/// All orders of one side sharing a price.
struct StackLevel {
  Price price;
  Quantity quantity;
  Quantity cumulative;
  std::vector<Contribution> contributors;  // AgentId ascending
};

/// Demand sorted by price descending, supply ascending.
struct MarketStacks {
  std::vector<StackLevel> demand;
  std::vector<StackLevel> supply;

  Quantity total_demand() const { return demand.empty() ? Quantity{} : demand.back().cumulative; }
  Quantity total_supply() const { return supply.empty() ? Quantity{} : supply.back().cumulative; }
};

namespace detail {

inline void recompute_cumulative(std::vector<StackLevel>& levels) {
  Quantity running;
  for (auto& level : levels) {
    running += level.quantity;
    level.cumulative = running;
  }
}

inline std::vector<StackLevel> group_levels(std::vector<Order>& orders, bool descending) {
  std::sort(orders.begin(), orders.end(), [descending](const Order& a, const Order& b) {
    if (a.price != b.price) return descending ? b.price < a.price : a.price < b.price;
    return a.agent < b.agent;
  });
  std::vector<StackLevel> levels;
  for (const auto& o : orders) {
    if (levels.empty() || levels.back().price != o.price) {
      levels.push_back(StackLevel{o.price, Quantity{}, Quantity{}, {}});
    }
    levels.back().quantity += o.quantity;
    levels.back().contributors.push_back({o.agent, o.quantity});
  }
  recompute_cumulative(levels);
  return levels;
}

}  // namespace detail

inline MarketStacks build_stacks(std::span<const Order> orders) {
  std::vector<Order> bids;
  std::vector<Order> asks;
  for (const auto& o : orders) {
    (o.side == Side::Buy ? bids : asks).push_back(o);
  }
  MarketStacks stacks;
  stacks.demand = detail::group_levels(bids, true);
  stacks.supply = detail::group_levels(asks, false);
  return stacks;
}

/// Inserts one order into already-built stacks; equivalent to rebuilding with it included.
inline void insert_order(MarketStacks& stacks, const Order& order) {
  const bool buy = order.side == Side::Buy;
  auto& levels = buy ? stacks.demand : stacks.supply;
  auto pos = std::find_if(levels.begin(), levels.end(), [&](const StackLevel& l) {
    return buy ? !(order.price < l.price) : !(l.price < order.price);
  });
  if (pos == levels.end() || pos->price != order.price) {
    pos = levels.insert(pos, StackLevel{order.price, Quantity{}, Quantity{}, {}});
  }
  auto& c = pos->contributors;
  auto at = std::lower_bound(c.begin(), c.end(), order.agent,
                             [](const Contribution& x, AgentId id) { return x.agent < id; });
  c.insert(at, Contribution{order.agent, order.quantity});
  pos->quantity += order.quantity;
  detail::recompute_cumulative(levels);
}

/// Removes `agent`'s order from one side; the inverse of insert_order.
inline void remove_order(MarketStacks& stacks, AgentId agent, Side side) {
  auto& levels = side == Side::Buy ? stacks.demand : stacks.supply;
  for (auto level = levels.begin(); level != levels.end(); ++level) {
    auto& c = level->contributors;
    auto at = std::find_if(c.begin(), c.end(), [agent](const Contribution& x) { return x.agent == agent; });
    if (at == c.end()) continue;
    level->quantity -= at->quantity;
    c.erase(at);
    if (c.empty()) levels.erase(level);
    detail::recompute_cumulative(levels);
    return;
  }
  throw MarketError(Errc::PreconditionViolation, "agent " + std::to_string(agent) + " has no order to remove");
}

/// Crossing point of the two step curves.
///
/// `bid_levels` (L) and `ask_levels` (H) count the levels whose cumulative
/// quantity covers (0, q_star]. Marginal prices are absent when q_star == 0;
/// the "next" prices are absent when no further level exists.
struct Intersection {
  Quantity q_star;
  std::size_t bid_levels = 0;
  std::size_t ask_levels = 0;
  std::optional<Price> marginal_bid;   // pb_L
  std::optional<Price> marginal_ask;   // ps_H
  std::optional<Price> next_bid;       // pb_{L+1}
  std::optional<Price> next_ask;       // ps_{H+1}
  Quantity total_demand;
  Quantity total_supply;
};

inline Intersection find_intersection(const MarketStacks& stacks) {
  const auto& d = stacks.demand;
  const auto& s = stacks.supply;
  Intersection x;
  x.total_demand = stacks.total_demand();
  x.total_supply = stacks.total_supply();

  std::size_t i = 0;
  std::size_t j = 0;
  Quantity pos;
  while (i < d.size() && j < s.size() && !(d[i].price < s[j].price)) {
    pos = std::min(d[i].cumulative, s[j].cumulative);
    if (d[i].cumulative == pos) ++i;
    if (s[j].cumulative == pos) ++j;
  }
  x.q_star = pos;
  if (pos.count() == 0) {
    if (!d.empty()) x.next_bid = d.front().price;
    if (!s.empty()) x.next_ask = s.front().price;
    return x;
  }
  auto covering = [&](const std::vector<StackLevel>& levels) {
    auto it = std::lower_bound(levels.begin(), levels.end(), pos,
                               [](const StackLevel& l, Quantity q) { return l.cumulative < q; });
    return static_cast<std::size_t>(it - levels.begin()) + 1;
  };
  x.bid_levels = covering(d);
  x.ask_levels = covering(s);
  x.marginal_bid = d[x.bid_levels - 1].price;
  x.marginal_ask = s[x.ask_levels - 1].price;
  if (x.bid_levels < d.size()) x.next_bid = d[x.bid_levels].price;
  if (x.ask_levels < s.size()) x.next_ask = s[x.ask_levels].price;
  return x;
}

/// Reduces the quantities by `excess` in total, uniformly per participant.
/// Participants that would go negative are clamped at zero and the shortfall
/// is spread over the rest (water-filling). Indivisible raw units are taken
/// from the earliest positions first.
inline std::vector<Quantity> prorate_uniform(std::span<const Quantity> quantities, Quantity excess) {
  std::vector<Quantity> out(quantities.begin(), quantities.end());
  if (excess.count() < 0) {
    throw MarketError(Errc::InternalInvariantViolation, "negative proration excess");
  }
  Quantity total;
  for (auto q : out) total += q;
  if (total < excess) {
    throw MarketError(Errc::InternalInvariantViolation,
                      "proration excess exceeds the cleared quantity of the long side");
  }
  auto remaining = excess.count();
  std::vector<std::size_t> active;
  active.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].count() > 0) active.push_back(i);
  }
  while (remaining > 0) {
    const auto n = static_cast<std::int64_t>(active.size());
    const auto share = remaining / n;
    const auto extra = remaining % n;
    std::size_t kept = 0;
    for (std::int64_t k = 0; k < n; ++k) {
      auto& q = out[active[static_cast<std::size_t>(k)]];
      const auto cut = std::min(share + (k < extra ? 1 : 0), q.count());
      q = Quantity::raw(q.count() - cut);
      remaining -= cut;
      if (q.count() > 0) active[kept++] = active[static_cast<std::size_t>(k)];
    }
    active.resize(kept);
  }
  return out;
}

struct Fill {
  AgentId agent = 0;
  Side side = Side::Buy;
  Quantity quantity;
  Price price;
};

struct Residual {
  AgentId agent = 0;
  Side side = Side::Buy;
  Quantity quantity;
};

struct MatchedPair {
  AgentId buyer = 0;
  AgentId seller = 0;
  Quantity quantity;
  Price bid_price;
  Price ask_price;
};

enum class VickreyCase { CaseI, CaseII, Degenerate };

struct ClearingOutcome {
  Mechanism mechanism = Mechanism::KDouble;
  Intersection intersection;
  std::vector<Fill> fills;         // one per cleared agent, cleared quantity > 0
  std::vector<Residual> uncleared; // one per agent with residual > 0, routed to the utility
  std::vector<MatchedPair> pairs;  // MVM only
  Quantity cleared_volume;
  std::optional<Price> buyer_price;   // uniform buyer price, if any
  std::optional<Price> seller_price;  // uniform seller price, if any
  Money auctioneer_surplus;
  bool mcafee_uniform = false;  // McAfee took the uniform-price branch

  Quantity total_demand() const { return intersection.total_demand; }
  Quantity total_supply() const { return intersection.total_supply; }
};

namespace detail {

inline Quantity level_sum(const std::vector<StackLevel>& levels, std::size_t n) {
  return n == 0 ? Quantity{} : levels[n - 1].cumulative;
}

/// Clears the first `cleared_levels` levels of one side at `price`, removing
/// `excess` from them by uniform proration, and routes everything else to
/// the utility. Participants are visited in stack order (price priority,
/// then AgentId), which also fixes who absorbs indivisible raw units.
inline void emit_side(const std::vector<StackLevel>& levels, std::size_t cleared_levels,
                      Quantity excess, Price price, Side side, ClearingOutcome& out) {
  std::size_t participants = 0;
  for (const auto& level : levels) participants += level.contributors.size();
  out.fills.reserve(out.fills.size() + participants);
  out.uncleared.reserve(out.uncleared.size() + participants);
  std::vector<Quantity> submitted;
  std::vector<AgentId> ids;
  submitted.reserve(participants);
  ids.reserve(participants);
  for (std::size_t l = 0; l < cleared_levels && l < levels.size(); ++l) {
    for (const auto& c : levels[l].contributors) {
      submitted.push_back(c.quantity);
      ids.push_back(c.agent);
    }
  }
  const auto cleared = excess.count() > 0 ? prorate_uniform(submitted, excess) : submitted;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (cleared[i].count() > 0) out.fills.push_back({ids[i], side, cleared[i], price});
    const auto rest = submitted[i] - cleared[i];
    if (rest.count() > 0) out.uncleared.push_back({ids[i], side, rest});
  }
  for (std::size_t l = cleared_levels; l < levels.size(); ++l) {
    for (const auto& c : levels[l].contributors) out.uncleared.push_back({c.agent, side, c.quantity});
  }
}

/// Clears the first `buyer_levels` demand levels and `seller_levels` supply
/// levels at uniform side prices, prorating whichever side is long.
inline void clear_uniform(const MarketStacks& stacks, std::size_t buyer_levels,
                          std::size_t seller_levels, Price buyer_price, Price seller_price,
                          ClearingOutcome& out) {
  const auto qb = level_sum(stacks.demand, buyer_levels);
  const auto qs = level_sum(stacks.supply, seller_levels);
  const auto none = Quantity{};
  emit_side(stacks.demand, buyer_levels, qs < qb ? qb - qs : none, buyer_price, Side::Buy, out);
  emit_side(stacks.supply, seller_levels, qb < qs ? qs - qb : none, seller_price, Side::Sell, out);
  out.cleared_volume = std::min(qb, qs);
  if (out.cleared_volume.count() > 0) {
    out.buyer_price = buyer_price;
    out.seller_price = seller_price;
  }
}

inline void clear_nothing(const MarketStacks& stacks, ClearingOutcome& out) {
  emit_side(stacks.demand, 0, Quantity{}, Price{}, Side::Buy, out);
  emit_side(stacks.supply, 0, Quantity{}, Price{}, Side::Sell, out);
}

/// Auctioneer's net take: buyer payments minus seller receipts.
inline void settle(ClearingOutcome& out) {
  Money net;
  for (const auto& f : out.fills) {
    net += f.side == Side::Buy ? f.price * f.quantity : -(f.price * f.quantity);
  }
  out.auctioneer_surplus = net;
}

inline ClearingOutcome empty_outcome(Mechanism m, const Intersection& x) {
  ClearingOutcome out;
  out.mechanism = m;
  out.intersection = x;
  return out;
}

/// k·pb + (1−k)·ps, rounded to the nearest raw price unit.
inline Price convex_price(double k, Price bid, Price ask) {
  const double v = k * static_cast<double>(bid.count()) + (1.0 - k) * static_cast<double>(ask.count());
  return Price::raw(static_cast<Price::rep>(std::llround(v)));
}

}  // namespace detail

/// Uniform price k·pb_L + (1−k)·ps_H for the first L buyers and H sellers.
inline ClearingOutcome clear_k_double(const MarketStacks& stacks, const MarketConstants& constants) {
  const auto x = find_intersection(stacks);
  auto out = detail::empty_outcome(Mechanism::KDouble, x);
  if (x.q_star.count() > 0) {
    const auto price = detail::convex_price(constants.k, *x.marginal_bid, *x.marginal_ask);
    detail::clear_uniform(stacks, x.bid_levels, x.ask_levels, price, price, out);
  } else {
    detail::clear_nothing(stacks, out);
  }
  detail::settle(out);
  return out;
}

inline VickreyCase classify_vickrey_case(const Intersection& x, const MarketStacks& stacks) {
  if (x.q_star.count() <= 0) {
    throw MarketError(Errc::PreconditionViolation, "Vickrey case requires a positive crossing");
  }
  const auto L = x.bid_levels;
  const auto H = x.ask_levels;
  auto cum = [](const std::vector<StackLevel>& v, std::size_t n) {
    return n == 0 ? Quantity{} : v[n - 1].cumulative;
  };
  const auto pb = *x.marginal_bid;
  const auto ps = *x.marginal_ask;
  const bool case1 = !(pb < ps) && (!x.next_bid || !(ps < *x.next_bid)) &&
                     !(cum(stacks.demand, L) < cum(stacks.supply, H - 1)) &&
                     !(cum(stacks.supply, H) < cum(stacks.demand, L));
  if (case1) return VickreyCase::CaseI;
  const bool case2 = (!x.next_ask || !(*x.next_ask < pb)) && !(pb < ps) &&
                     !(cum(stacks.supply, H) < cum(stacks.demand, L - 1)) &&
                     !(cum(stacks.demand, L) < cum(stacks.supply, H));
  if (case2) return VickreyCase::CaseII;
  return VickreyCase::Degenerate;
}

/// Clears buyers 1..L−1 at pb_L and sellers 1..H−1 at ps_H. Case I, Case II
/// and the degenerate configuration share these rules.
inline ClearingOutcome clear_vickrey_variant(const MarketStacks& stacks,
                                             const MarketConstants& /*constants*/) {
  const auto x = find_intersection(stacks);
  auto out = detail::empty_outcome(Mechanism::VickreyVariant, x);
  if (x.q_star.count() > 0 && x.bid_levels > 1 && x.ask_levels > 1) {
    detail::clear_uniform(stacks, x.bid_levels - 1, x.ask_levels - 1, *x.marginal_bid,
                          *x.marginal_ask, out);
  } else {
    detail::clear_nothing(stacks, out);
  }
  detail::settle(out);
  return out;
}

/// Uniform price P0 = (pb_{L+1} + ps_{H+1})/2 when both marginal-next prices
/// exist and P0 lies in [ps_H, pb_L]; otherwise the Vickrey-variant outcome.
inline ClearingOutcome clear_mcafee(const MarketStacks& stacks, const MarketConstants& constants) {
  const auto x = find_intersection(stacks);
  if (x.q_star.count() > 0 && x.next_bid && x.next_ask) {
    const auto twice = x.next_bid->count() + x.next_ask->count();
    if (2 * x.marginal_ask->count() <= twice && twice <= 2 * x.marginal_bid->count()) {
      auto out = detail::empty_outcome(Mechanism::McAfee, x);
      // Round half up; exact whenever the sum is even.
      const auto p0 = Price::raw((twice + 1) / 2);
      detail::clear_uniform(stacks, x.bid_levels, x.ask_levels, p0, p0, out);
      out.mcafee_uniform = true;
      detail::settle(out);
      return out;
    }
  }
  auto out = clear_vickrey_variant(stacks, constants);
  out.mechanism = Mechanism::McAfee;
  return out;
}

namespace detail {

/// Whether pairing the top `volume` bid units with the bottom `volume` ask
/// units, both ascending in price, keeps bid >= ask everywhere.
inline bool mvm_feasible(const MarketStacks& stacks, Quantity volume) {
  if (volume.count() == 0) return true;
  const auto& d = stacks.demand;
  const auto& s = stacks.supply;
  // Level containing the volume-th highest bid unit.
  auto it = std::lower_bound(d.begin(), d.end(), volume,
                             [](const StackLevel& l, Quantity q) { return l.cumulative < q; });
  auto bi = static_cast<std::ptrdiff_t>(it - d.begin());
  Quantity bid_left = volume - (bi == 0 ? Quantity{} : d[static_cast<std::size_t>(bi - 1)].cumulative);
  std::size_t ai = 0;
  Quantity ask_left = s.empty() ? Quantity{} : s[0].quantity;
  Quantity done;
  while (done < volume) {
    const auto& bid = d[static_cast<std::size_t>(bi)];
    const auto& ask = s[ai];
    if (bid.price < ask.price) return false;
    const auto step = std::min(bid_left, ask_left);
    done += step;
    bid_left -= step;
    ask_left -= step;
    if (bid_left.count() == 0 && bi > 0) {
      --bi;
      bid_left = d[static_cast<std::size_t>(bi)].quantity;
    }
    if (ask_left.count() == 0 && ai + 1 < s.size()) {
      ++ai;
      ask_left = s[ai].quantity;
    }
  }
  return true;
}

struct Allotment {
  AgentId agent;
  Price price;
  Quantity quantity;
};

/// Clears `volume` from the front of one side, prorating the level it cuts
/// through, and records the allotments level by level in stack order.
inline std::vector<std::vector<Allotment>> emit_front(const std::vector<StackLevel>& levels,
                                                      Quantity volume, Side side,
                                                      ClearingOutcome& out) {
  std::vector<std::vector<Allotment>> taken;
  Quantity before;
  for (const auto& level : levels) {
    if (!(before < volume)) {
      for (const auto& c : level.contributors) out.uncleared.push_back({c.agent, side, c.quantity});
      continue;
    }
    std::vector<Allotment> row;
    std::vector<Quantity> q;
    for (const auto& c : level.contributors) q.push_back(c.quantity);
    const auto excess = volume < level.cumulative ? level.cumulative - volume : Quantity{};
    const auto cleared = excess.count() > 0 ? prorate_uniform(q, excess) : q;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto id = level.contributors[i].agent;
      if (cleared[i].count() > 0) {
        row.push_back({id, level.price, cleared[i]});
        out.fills.push_back({id, side, cleared[i], level.price});
      }
      if (cleared[i] < q[i]) out.uncleared.push_back({id, side, q[i] - cleared[i]});
    }
    taken.push_back(std::move(row));
    before = level.cumulative;
  }
  return taken;
}

}  // namespace detail

/// Largest volume V such that the V highest bid units can be paired with the V
/// lowest ask units in ascending price order with bid >= ask per pair.
inline Quantity mvm_volume(const MarketStacks& stacks) {
  auto lo = Quantity::rep{0};
  auto hi = std::min(stacks.total_demand(), stacks.total_supply()).count();
  while (lo < hi) {
    const auto mid = lo + (hi - lo + 1) / 2;
    if (detail::mvm_feasible(stacks, Quantity::raw(mid))) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return Quantity::raw(lo);
}

/// Pay-as-bid maximum volume matching.
inline ClearingOutcome clear_mvm(const MarketStacks& stacks, const MarketConstants& /*constants*/) {
  auto out = detail::empty_outcome(Mechanism::MVM, find_intersection(stacks));
  const auto volume = mvm_volume(stacks);
  out.cleared_volume = volume;
  auto bids = detail::emit_front(stacks.demand, volume, Side::Buy, out);
  auto asks = detail::emit_front(stacks.supply, volume, Side::Sell, out);
  std::vector<detail::Allotment> bid_seq;
  for (auto r = bids.rbegin(); r != bids.rend(); ++r) bid_seq.insert(bid_seq.end(), r->begin(), r->end());
  std::vector<detail::Allotment> ask_seq;
  for (auto& row : asks) ask_seq.insert(ask_seq.end(), row.begin(), row.end());

  // Ascending bids against ascending asks.
  std::size_t bi = 0;
  std::size_t ai = 0;
  Quantity bid_left = bid_seq.empty() ? Quantity{} : bid_seq[0].quantity;
  Quantity ask_left = ask_seq.empty() ? Quantity{} : ask_seq[0].quantity;
  while (bi < bid_seq.size() && ai < ask_seq.size()) {
    const auto step = std::min(bid_left, ask_left);
    out.pairs.push_back({bid_seq[bi].agent, ask_seq[ai].agent, step, bid_seq[bi].price,
                         ask_seq[ai].price});
    bid_left -= step;
    ask_left -= step;
    if (bid_left.count() == 0 && ++bi < bid_seq.size()) bid_left = bid_seq[bi].quantity;
    if (ask_left.count() == 0 && ++ai < ask_seq.size()) ask_left = ask_seq[ai].quantity;
  }
  detail::settle(out);
  return out;
}

inline ClearingOutcome clear(Mechanism m, const MarketStacks& stacks, const MarketConstants& c) {
  switch (m) {
    case Mechanism::KDouble: return clear_k_double(stacks, c);
    case Mechanism::VickreyVariant: return clear_vickrey_variant(stacks, c);
    case Mechanism::McAfee: return clear_mcafee(stacks, c);
    case Mechanism::MVM: return clear_mvm(stacks, c);
  }
  throw MarketError(Errc::PreconditionViolation, "unknown mechanism");
}

/// Buyers' surplus Σ(P_UR − p)·q over fills; sellers' Σ p·q plus P_FIT on unsold supply.
struct SurplusBreakdown {
  Money buyers;
  Money sellers;
  Money total() const { return buyers + sellers; }
};

inline SurplusBreakdown agent_surplus(const ClearingOutcome& outcome, const MarketConstants& c) {
  SurplusBreakdown s;
  for (const auto& f : outcome.fills) {
    if (f.side == Side::Buy) {
      s.buyers += (c.p_ur - f.price) * f.quantity;
    } else {
      s.sellers += f.price * f.quantity;
    }
  }
  for (const auto& r : outcome.uncleared) {
    if (r.side == Side::Sell) s.sellers += c.p_fit * r.quantity;
  }
  return s;
}

}  // namespace p2pmarket

#endif  // P2PMARKET_CLEARING_HPP
