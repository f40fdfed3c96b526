#ifndef P2PMARKET_ORACLE_HPP
#define P2PMARKET_ORACLE_HPP

// Brute-force verifiers: maximum-volume ground truth by bipartite matching,
// single-agent price-deviation sweeps, ex-post Nash checks for the k-double
// auction, and budget-balance / conservation audits over random books.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "p2pmarket/clearing.hpp"
#include "p2pmarket/market.hpp"
#include "p2pmarket/rng.hpp"

namespace p2pmarket {

/// Clearing entry point under test; swappable so a faulty rule can be injected.
using ClearFn = std::function<ClearingOutcome(Mechanism, const MarketStacks&, const MarketConstants&)>;

inline ClearFn default_clear() {
  return [](Mechanism m, const MarketStacks& s, const MarketConstants& c) { return clear(m, s, c); };
}

/// At most 8 orders, quantities in multiples of 0.5 kWh up to 4 kWh, prices on the arm grid.
struct SmallInstance {
  std::vector<Order> orders;

  static constexpr std::size_t kMaxOrders = 8;
  static constexpr std::int64_t kUnit = QuantityTag::scale / 2;
  static constexpr std::int64_t kMaxUnits = 8;

  Quantity total(Side side) const {
    Quantity q;
    for (const auto& o : orders) {
      if (o.side == side) q += o.quantity;
    }
    return q;
  }
};

inline void validate_small_instance(const SmallInstance& inst, const MarketConstants& c) {
  if (inst.orders.size() > SmallInstance::kMaxOrders) {
    throw MarketError(Errc::PreconditionViolation, "small instance holds more than 8 orders");
  }
  for (const auto& o : inst.orders) {
    const auto q = o.quantity.count();
    if (q <= 0 || q % SmallInstance::kUnit != 0 || q / SmallInstance::kUnit > SmallInstance::kMaxUnits) {
      throw MarketError(Errc::PreconditionViolation, "small-instance quantity off the 0.5 kWh grid");
    }
    if (!std::binary_search(c.arm_prices.begin(), c.arm_prices.end(), o.price)) {
      throw MarketError(Errc::PreconditionViolation, "small-instance price off the arm grid");
    }
  }
}

/// Maximum number of (bid unit, ask unit) pairs with bid >= ask, by augmenting
/// paths over 0.5 kWh units. Independent of the greedy rule in clear_mvm.
inline Quantity mvm_volume_bruteforce(const SmallInstance& inst) {
  std::vector<Price> bid_units;
  std::vector<Price> ask_units;
  for (const auto& o : inst.orders) {
    auto& units = o.side == Side::Buy ? bid_units : ask_units;
    for (auto u = o.quantity.count() / SmallInstance::kUnit; u > 0; --u) units.push_back(o.price);
  }
  std::vector<int> ask_match(ask_units.size(), -1);
  std::vector<char> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t b) {
    for (std::size_t a = 0; a < ask_units.size(); ++a) {
      if (ask_units[a] > bid_units[b] || seen[a]) continue;
      seen[a] = 1;
      if (ask_match[a] < 0 || augment(static_cast<std::size_t>(ask_match[a]))) {
        ask_match[a] = static_cast<int>(b);
        return true;
      }
    }
    return false;
  };
  std::int64_t matched = 0;
  for (std::size_t b = 0; b < bid_units.size(); ++b) {
    seen.assign(ask_units.size(), 0);
    if (augment(b)) ++matched;
  }
  return Quantity::raw(matched * SmallInstance::kUnit);
}

/// Λ − Λ̲ for one agent: buyers Σ(P_UR − p)·q, sellers Σ(p − P_FIT)·q over its fills.
inline Money agent_utility(const ClearingOutcome& outcome, AgentId agent, const MarketConstants& c) {
  Money u;
  for (const auto& f : outcome.fills) {
    if (f.agent != agent) continue;
    u += f.side == Side::Buy ? (c.p_ur - f.price) * f.quantity : (f.price - c.p_fit) * f.quantity;
  }
  return u;
}

inline Price reservation_price(Side side, const MarketConstants& c) {
  return side == Side::Buy ? c.p_ur : c.p_fit;
}

/// Every order moved to its side's reservation price; quantities untouched.
inline SmallInstance at_reservation(SmallInstance inst, const MarketConstants& c) {
  for (auto& o : inst.orders) o.price = reservation_price(o.side, c);
  return inst;
}

struct DeviationReport {
  Mechanism mechanism = Mechanism::KDouble;
  SmallInstance instance;  // truthful baseline
  AgentId deviator = 0;
  Money original_utility;
  Money best_utility;
  std::size_t witness_arm = 0;  // arm reaching best_utility
  std::vector<Money> arm_utilities;

  Money gain() const { return best_utility - original_utility; }
  bool strict_gain() const { return gain().count() > 0; }
};

namespace detail {

inline Money utility_with_price(const SmallInstance& inst, std::size_t index, Price price, Mechanism m,
                                const MarketConstants& c, const ClearFn& fn) {
  auto orders = inst.orders;
  orders[index].price = price;
  return agent_utility(fn(m, build_stacks(orders), c), orders[index].agent, c);
}

inline std::size_t order_index(const SmallInstance& inst, AgentId agent) {
  for (std::size_t i = 0; i < inst.orders.size(); ++i) {
    if (inst.orders[i].agent == agent) return i;
  }
  throw MarketError(Errc::PreconditionViolation, "deviator " + std::to_string(agent) + " has no order");
}

}  // namespace detail

/// Baseline: everyone at the reservation price. The deviator then tries every
/// arm, everything else fixed; the report keeps the best arm (lowest on ties).
inline DeviationReport deviation_test(Mechanism m, const SmallInstance& instance, AgentId deviator,
                                      const MarketConstants& c, const ClearFn& fn = default_clear()) {
  DeviationReport r;
  r.mechanism = m;
  r.instance = at_reservation(instance, c);
  r.deviator = deviator;
  const auto idx = detail::order_index(r.instance, deviator);
  r.original_utility = detail::utility_with_price(r.instance, idx, r.instance.orders[idx].price, m, c, fn);
  r.best_utility = r.original_utility;
  r.witness_arm = static_cast<std::size_t>(
      std::lower_bound(c.arm_prices.begin(), c.arm_prices.end(), r.instance.orders[idx].price) -
      c.arm_prices.begin());
  r.arm_utilities.reserve(c.arms());
  for (std::size_t arm = 0; arm < c.arms(); ++arm) {
    const auto u = detail::utility_with_price(r.instance, idx, c.arm_prices[arm], m, c, fn);
    r.arm_utilities.push_back(u);
    if (u > r.best_utility) {
      r.best_utility = u;
      r.witness_arm = arm;
    }
  }
  return r;
}

struct NashReport {
  SmallInstance instance;  // everyone at the profile price
  Price profile_price;
  bool passed = true;
  std::optional<DeviationReport> witness;  // first strictly profitable deviation
};

/// Everyone at `profile_price`; passes when no single agent strictly gains by
/// moving to any other arm.
inline NashReport ex_post_nash_check(const SmallInstance& instance, Price profile_price,
                                     const MarketConstants& c, const ClearFn& fn = default_clear()) {
  NashReport rep;
  rep.instance = instance;
  rep.profile_price = profile_price;
  for (auto& o : rep.instance.orders) o.price = profile_price;
  for (std::size_t i = 0; i < rep.instance.orders.size(); ++i) {
    const auto base = detail::utility_with_price(rep.instance, i, profile_price, Mechanism::KDouble, c, fn);
    for (std::size_t m = 0; m < c.arms(); ++m) {
      const auto u = detail::utility_with_price(rep.instance, i, c.arm_prices[m], Mechanism::KDouble, c, fn);
      if (u > base) {
        DeviationReport w;
        w.mechanism = Mechanism::KDouble;
        w.instance = rep.instance;
        w.deviator = rep.instance.orders[i].agent;
        w.original_utility = base;
        w.best_utility = u;
        w.witness_arm = m;
        rep.passed = false;
        rep.witness = std::move(w);
        return rep;
      }
    }
  }
  return rep;
}

/// Which of the three equilibrium cases a quantity profile falls in, and the
/// profile price(s) it must be checked at.
enum class NashCase { OverSupplied, OverDemanded, Balanced };

inline NashCase nash_case(const SmallInstance& inst) {
  const auto d = inst.total(Side::Buy);
  const auto s = inst.total(Side::Sell);
  if (d < s) return NashCase::OverSupplied;
  if (s < d) return NashCase::OverDemanded;
  return NashCase::Balanced;
}

inline std::vector<Price> nash_profile_prices(NashCase k, const MarketConstants& c) {
  switch (k) {
    case NashCase::OverSupplied: return {c.p_fit};
    case NashCase::OverDemanded: return {c.p_ur};
    case NashCase::Balanced: {
      std::vector<Price> out;
      for (auto p : c.arm_prices) {
        if (!(p < c.p_fit) && !(c.p_ur < p)) out.push_back(p);
      }
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Random instances. The oracle draws from its own seed namespace.

inline SplitMix64 oracle_rng(std::uint64_t seed) {
  return SplitMix64(seed ^ (static_cast<std::uint64_t>(Stream::Oracle) * 0x9e3779b97f4a7c15ULL));
}

/// 2..8 orders with at least one per side.
inline SmallInstance random_small_instance(SplitMix64& rng, const MarketConstants& c) {
  SmallInstance inst;
  const auto n = static_cast<std::size_t>(rng.range(2, SmallInstance::kMaxOrders));
  const auto buyers = static_cast<std::size_t>(rng.range(1, static_cast<std::int64_t>(n) - 1));
  for (std::size_t i = 0; i < n; ++i) {
    Order o;
    o.agent = static_cast<AgentId>(i);
    o.side = i < buyers ? Side::Buy : Side::Sell;
    o.price = c.arm_prices[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(c.arms()) - 1))];
    o.quantity = Quantity::raw(rng.range(1, SmallInstance::kMaxUnits) * SmallInstance::kUnit);
    inst.orders.push_back(o);
  }
  return inst;
}

/// Up to `max_orders` orders; raw-unit quantities in (0, 5] kWh. Prices are on
/// the arm grid, or anywhere in [0, max arm] when `off_grid` is set.
inline std::vector<Order> random_book(SplitMix64& rng, const MarketConstants& c, std::size_t max_orders,
                                      bool off_grid = false) {
  const auto n = static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(max_orders)));
  std::vector<Order> book;
  book.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Order o;
    o.agent = static_cast<AgentId>(i);
    o.side = rng.next() & 1 ? Side::Buy : Side::Sell;
    o.price = off_grid ? Price::raw(rng.range(0, c.arm_prices.back().count()))
                       : c.arm_prices[static_cast<std::size_t>(
                             rng.range(0, static_cast<std::int64_t>(c.arms()) - 1))];
    // Coarse quantities half the time so equal-quantity ties are common.
    o.quantity = rng.next() & 1 ? Quantity::raw(rng.range(1, 10) * SmallInstance::kUnit)
                                : Quantity::raw(rng.range(1, 5 * QuantityTag::scale));
    book.push_back(o);
  }
  return book;
}

// ---------------------------------------------------------------------------
// Outcome invariants.

/// Returns a description of the first violated invariant, if any.
inline std::optional<std::string> outcome_violation(const MarketStacks& stacks, const ClearingOutcome& out,
                                                    const MarketConstants& c) {
  Quantity bought;
  Quantity sold;
  Money paid;
  Money received;
  for (const auto& f : out.fills) {
    if (f.quantity.count() <= 0) return "non-positive fill";
    if (f.side == Side::Buy) {
      bought += f.quantity;
      paid += f.price * f.quantity;
    } else {
      sold += f.quantity;
      received += f.price * f.quantity;
    }
  }
  Quantity unsold;
  Quantity unbought;
  for (const auto& r : out.uncleared) {
    (r.side == Side::Sell ? unsold : unbought) += r.quantity;
  }
  if (bought != sold) return "volume balance: bought != sold";
  if (bought != out.cleared_volume) return "cleared_volume disagrees with fills";
  if (bought + unbought != stacks.total_demand()) return "demand not conserved";
  if (sold + unsold != stacks.total_supply()) return "supply not conserved";
  if (out.auctioneer_surplus != paid - received) return "auctioneer surplus != payments - receipts";
  const auto s_hat = agent_surplus(out, c).total();
  if (s_hat + out.auctioneer_surplus != c.p_ur * out.cleared_volume + c.p_fit * unsold) {
    return "conservation identity violated";
  }
  switch (out.mechanism) {
    case Mechanism::KDouble:
      if (out.auctioneer_surplus.count() != 0) return "k-double auctioneer surplus != 0";
      break;
    default:
      if (out.auctioneer_surplus.count() < 0) return "negative auctioneer surplus";
      break;
  }
  if (out.mechanism == Mechanism::MVM) {
    Quantity paired;
    for (const auto& p : out.pairs) {
      if (p.bid_price < p.ask_price) return "MVM pair with bid < ask";
      paired += p.quantity;
    }
    if (paired != out.cleared_volume) return "MVM pairs do not cover the cleared volume";
  }
  // Individual rationality against submitted prices.
  for (const auto& f : out.fills) {
    const auto& levels = f.side == Side::Buy ? stacks.demand : stacks.supply;
    for (const auto& l : levels) {
      for (const auto& k : l.contributors) {
        if (k.agent != f.agent) continue;
        if (f.side == Side::Buy ? l.price < f.price : f.price < l.price) {
          return "fill price violates the submitted limit";
        }
      }
    }
  }
  return std::nullopt;
}

struct AuditReport {
  Mechanism mechanism = Mechanism::KDouble;
  std::uint64_t seed = 0;
  std::size_t instances = 0;
  std::size_t violations = 0;
  std::optional<std::vector<Order>> offending;
  std::string reason;

  bool passed() const { return violations == 0; }
};

/// Budget balance (exact zero for k-double, non-negative otherwise) plus the
/// remaining outcome invariants over `n` seeded random books.
inline AuditReport budget_balance_audit(Mechanism m, std::size_t n, std::uint64_t seed,
                                        const MarketConstants& c, const ClearFn& fn = default_clear(),
                                        std::size_t max_orders = 24) {
  if (n == 0) throw MarketError(Errc::PreconditionViolation, "audit needs at least one instance");
  AuditReport rep;
  rep.mechanism = m;
  rep.seed = seed;
  auto rng = oracle_rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto book = random_book(rng, c, max_orders, i % 4 == 3);
    const auto stacks = build_stacks(book);
    const auto out = fn(m, stacks, c);
    ++rep.instances;
    if (auto why = outcome_violation(stacks, out, c)) {
      if (rep.violations++ == 0) {
        rep.offending = book;
        rep.reason = *why;
      }
    }
  }
  return rep;
}

/// Volume ordering Q^V <= Q* <= Q^MVM on one book.
inline std::optional<std::string> volume_ordering_violation(const MarketStacks& stacks,
                                                            const MarketConstants& c,
                                                            const ClearFn& fn = default_clear()) {
  const auto qv = fn(Mechanism::VickreyVariant, stacks, c).cleared_volume;
  const auto qk = fn(Mechanism::KDouble, stacks, c).cleared_volume;
  const auto qm = fn(Mechanism::MVM, stacks, c).cleared_volume;
  if (qk != find_intersection(stacks).q_star) return "k-double volume != Q*";
  if (qk < qv) return "Q^V > Q*";
  if (qm < qk) return "Q* > Q^MVM";
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON.

inline nlohmann::json to_json(const Order& o) {
  return {{"agent", o.agent},
          {"side", o.side == Side::Buy ? "buy" : "sell"},
          {"price_cents", o.price.units()},
          {"quantity_kwh", o.quantity.units()}};
}

inline nlohmann::json to_json(std::span<const Order> orders) {
  auto arr = nlohmann::json::array();
  for (const auto& o : orders) arr.push_back(to_json(o));
  return arr;
}

inline nlohmann::json to_json(const DeviationReport& r, const MarketConstants& c) {
  return {{"mechanism", std::string(to_string(r.mechanism))},
          {"instance", to_json(r.instance.orders)},
          {"deviator", r.deviator},
          {"original_utility_cents", r.original_utility.units()},
          {"best_utility_cents", r.best_utility.units()},
          {"witness_arm", r.witness_arm},
          {"witness_price_cents", c.arm_prices.at(r.witness_arm).units()}};
}

inline nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json j = {{"mechanism", std::string(to_string(r.mechanism))},
                      {"seed", r.seed},
                      {"instances", r.instances},
                      {"violations", r.violations}};
  if (r.offending) {
    j["offending_instance"] = to_json(*r.offending);
    j["reason"] = r.reason;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Sweeps.

struct MvmSweepReport {
  std::size_t instances = 0;
  std::size_t mismatches = 0;
  std::optional<SmallInstance> witness;
  Quantity witness_clear;
  Quantity witness_bruteforce;
};

/// Every book with two bids and two asks over prices 4..9 ¢ and quantities
/// {0.5, 1, 1.5} kWh, then `random_instances` random small instances.
inline MvmSweepReport mvm_equivalence_sweep(const MarketConstants& c, std::size_t random_instances,
                                            std::uint64_t seed, const ClearFn& fn = default_clear()) {
  MvmSweepReport rep;
  auto check = [&](const SmallInstance& inst) {
    ++rep.instances;
    const auto got = fn(Mechanism::MVM, build_stacks(inst.orders), c).cleared_volume;
    const auto want = mvm_volume_bruteforce(inst);
    if (got != want && rep.mismatches++ == 0) {
      rep.witness = inst;
      rep.witness_clear = got;
      rep.witness_bruteforce = want;
    }
  };
  std::vector<Price> prices;
  for (int p = 4; p <= 9; ++p) prices.push_back(cents(p));
  const std::int64_t qs[] = {1, 2, 3};
  const std::size_t per = prices.size() * 3;
  for (std::size_t code = 0; code < per * per * per * per; ++code) {
    SmallInstance inst;
    auto rest = code;
    for (AgentId a = 0; a < 4; ++a) {
      const auto digit = rest % per;
      rest /= per;
      inst.orders.push_back({a, a < 2 ? Side::Buy : Side::Sell, prices[digit / 3],
                             Quantity::raw(qs[digit % 3] * SmallInstance::kUnit)});
    }
    check(inst);
  }
  auto rng = oracle_rng(seed);
  for (std::size_t i = 0; i < random_instances; ++i) check(random_small_instance(rng, c));
  return rep;
}

namespace detail {

inline bool gains_in(const DeviationReport& r, const MarketConstants& c, Price lo, Price hi) {
  for (std::size_t m = 0; m < r.arm_utilities.size(); ++m) {
    const auto p = c.arm_prices.at(m);
    if (lo < p && p < hi && r.arm_utilities[m] > r.original_utility) return true;
  }
  return false;
}

}  // namespace detail

/// A k-double witness of the over-demand construction: the deviator is a
/// seller, demand exceeds supply and some ask strictly between P_FIT and
/// P_UR beats the truthful one.
inline bool is_overdemand_seller_witness(const DeviationReport& r, const MarketConstants& c) {
  if (r.mechanism != Mechanism::KDouble || !r.strict_gain()) return false;
  const auto& o = r.instance.orders[detail::order_index(r.instance, r.deviator)];
  return o.side == Side::Sell && r.instance.total(Side::Sell) < r.instance.total(Side::Buy) &&
         detail::gains_in(r, c, c.p_fit, c.p_ur);
}

/// An MVM witness of the over-supply construction: a buyer in an over-supplied
/// book gains by bidding below P_UR.
inline bool is_oversupply_buyer_witness(const DeviationReport& r, const MarketConstants& c) {
  if (r.mechanism != Mechanism::MVM || !r.strict_gain()) return false;
  const auto& o = r.instance.orders[detail::order_index(r.instance, r.deviator)];
  return o.side == Side::Buy && r.instance.total(Side::Buy) < r.instance.total(Side::Sell) &&
         detail::gains_in(r, c, Price::raw(-1), c.p_ur);
}

/// Whether `r` reproduces the known manipulation of its mechanism. McAfee and
/// the Vickrey variant have none.
inline bool is_construction_witness(const DeviationReport& r, const MarketConstants& c) {
  switch (r.mechanism) {
    case Mechanism::KDouble: return is_overdemand_seller_witness(r, c);
    case Mechanism::MVM: return is_oversupply_buyer_witness(r, c);
    default: return false;
  }
}

struct DeviationSweep {
  Mechanism mechanism = Mechanism::KDouble;
  std::size_t instances = 0;
  std::size_t tests = 0;
  std::size_t strict_gains = 0;
  Money max_gain;
  std::vector<DeviationReport> witnesses;  // first few strict gains
  std::size_t construction_witnesses = 0;
  std::optional<DeviationReport> construction;  // first of them
};

inline DeviationSweep deviation_sweep(Mechanism m, std::size_t instances, std::uint64_t seed,
                                      const MarketConstants& c, const ClearFn& fn = default_clear(),
                                      std::size_t keep = 8) {
  DeviationSweep sw;
  sw.mechanism = m;
  auto rng = oracle_rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    const auto inst = random_small_instance(rng, c);
    ++sw.instances;
    for (const auto& o : inst.orders) {
      const auto r = deviation_test(m, inst, o.agent, c, fn);
      ++sw.tests;
      if (sw.tests == 1 || r.gain() > sw.max_gain) sw.max_gain = r.gain();
      if (r.strict_gain()) {
        ++sw.strict_gains;
        if (sw.witnesses.size() < keep) sw.witnesses.push_back(r);
        if (is_construction_witness(r, c) && sw.construction_witnesses++ == 0) sw.construction = r;
      }
    }
  }
  return sw;
}

struct NashSweep {
  std::size_t checks[3] = {0, 0, 0};  // per NashCase
  std::size_t failures = 0;
  std::optional<NashReport> witness;
};

/// Ex-post Nash checks over random quantity profiles, plus balanced profiles
/// built by splitting equal totals, at every admissible profile price.
inline NashSweep nash_sweep(std::size_t instances, std::uint64_t seed, const MarketConstants& c,
                            const ClearFn& fn = default_clear()) {
  NashSweep sw;
  auto rng = oracle_rng(seed);
  auto run = [&](const SmallInstance& inst) {
    const auto k = nash_case(inst);
    for (auto p : nash_profile_prices(k, c)) {
      auto rep = ex_post_nash_check(inst, p, c, fn);
      ++sw.checks[static_cast<int>(k)];
      if (!rep.passed && sw.failures++ == 0) sw.witness = std::move(rep);
    }
  };
  for (std::size_t i = 0; i < instances; ++i) {
    auto inst = random_small_instance(rng, c);
    run(inst);
    // Force balance: rescale the last seller to absorb the difference when possible.
    const auto d = inst.total(Side::Buy);
    const auto s = inst.total(Side::Sell);
    auto& last = inst.orders.back();
    const auto fixed = last.quantity + d - s;
    if (fixed.count() > 0 && fixed.count() <= SmallInstance::kMaxUnits * SmallInstance::kUnit) {
      last.quantity = fixed;
      run(inst);
    }
  }
  return sw;
}

// ---------------------------------------------------------------------------
// Full verification run.

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t books = 10000;              // random books per mechanism
  std::size_t small_instances = 2000;     // random SmallInstances for the MVM sweep
  std::size_t deviation_instances = 1000; // per mechanism
  std::size_t nash_instances = 1000;
};

struct VerifyResult {
  bool passed = true;
  nlohmann::json report;
};

/// Runs every oracle suite against `fn`. The report lists each suite with its
/// verdict and, on failure, a witness.
inline VerifyResult run_verification(const MarketConstants& c, const VerifyOptions& opt,
                                     const ClearFn& fn = default_clear()) {
  VerifyResult res;
  auto suites = nlohmann::json::array();
  auto record = [&](const std::string& name, bool ok, nlohmann::json detail) {
    detail["suite"] = name;
    detail["passed"] = ok;
    suites.push_back(std::move(detail));
    res.passed = res.passed && ok;
  };

  for (auto m : kAllMechanisms) {
    const auto a = budget_balance_audit(m, opt.books, opt.seed, c, fn);
    record("invariants/" + std::string(to_string(m)), a.passed(), to_json(a));
  }

  {
    auto rng = oracle_rng(opt.seed + 1);
    std::size_t bad = 0;
    nlohmann::json j;
    for (std::size_t i = 0; i < opt.books; ++i) {
      const auto book = random_book(rng, c, 24, i % 4 == 3);
      if (auto why = volume_ordering_violation(build_stacks(book), c, fn); why && bad++ == 0) {
        j["offending_instance"] = to_json(book);
        j["reason"] = *why;
      }
    }
    j["instances"] = opt.books;
    j["violations"] = bad;
    record("volume-ordering", bad == 0, j);
  }

  {
    const auto r = mvm_equivalence_sweep(c, opt.small_instances, opt.seed, fn);
    nlohmann::json j = {{"instances", r.instances}, {"mismatches", r.mismatches}};
    if (r.witness) {
      j["witness"] = to_json(r.witness->orders);
      j["clear_mvm_kwh"] = r.witness_clear.units();
      j["bruteforce_kwh"] = r.witness_bruteforce.units();
    }
    record("mvm-max-volume", r.mismatches == 0, j);
  }

  for (auto m : kAllMechanisms) {
    const auto sw = deviation_sweep(m, opt.deviation_instances, opt.seed, c, fn);
    nlohmann::json j = {{"mechanism", std::string(to_string(m))},
                        {"instances", sw.instances},
                        {"tests", sw.tests},
                        {"strict_gains", sw.strict_gains},
                        {"max_gain_cents", sw.max_gain.units()}};
    bool ok = false;
    if (m == Mechanism::McAfee || m == Mechanism::VickreyVariant) {
      ok = sw.strict_gains == 0;
      if (!ok) j["witness"] = to_json(sw.witnesses.front(), c);
    } else {
      ok = sw.construction.has_value();
      j["construction_witnesses"] = sw.construction_witnesses;
      if (ok) j["witness"] = to_json(*sw.construction, c);
    }
    record("deviation/" + std::string(to_string(m)), ok, j);
  }

  {
    const auto sw = nash_sweep(opt.nash_instances, opt.seed, c, fn);
    nlohmann::json j = {{"over_supplied_checks", sw.checks[0]},
                        {"over_demanded_checks", sw.checks[1]},
                        {"balanced_checks", sw.checks[2]},
                        {"failures", sw.failures}};
    if (sw.witness && sw.witness->witness) j["witness"] = to_json(*sw.witness->witness, c);
    const bool covered = sw.checks[0] > 0 && sw.checks[1] > 0 && sw.checks[2] > 0;
    record("ex-post-nash/k-double", sw.failures == 0 && covered, j);
  }

  res.report = {{"seed", opt.seed}, {"passed", res.passed}, {"suites", suites}};
  return res;
}

}  // namespace p2pmarket

#endif  // P2PMARKET_ORACLE_HPP
