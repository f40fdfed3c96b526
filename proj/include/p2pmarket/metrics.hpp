#ifndef P2PMARKET_METRICS_HPP
#define P2PMARKET_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "p2pmarket/clearing.hpp"
#include "p2pmarket/learning.hpp"

namespace p2pmarket {

/// Volume-weighted fill price of one side in ¢/kWh; empty when nothing cleared.
inline std::optional<double> volume_weighted_price(std::span<const Fill> fills, Side side) {
  Money value;
  Quantity volume;
  for (const auto& f : fills) {
    if (f.side != side) continue;
    value += f.price * f.quantity;
    volume += f.quantity;
  }
  if (volume.count() == 0) return std::nullopt;
  return static_cast<double>(value.count()) / static_cast<double>(volume.count()) /
         static_cast<double>(PriceTag::scale);
}

struct RoundMetrics {
  std::uint32_t day = 0;
  int hour = 0;
  Quantity cleared_volume;
  Money agent_surplus;
  Money auctioneer_surplus;
  std::optional<double> buyer_price;
  std::optional<double> seller_price;
  std::optional<double> ds_ratio;
  Quantity total_demand;
  Quantity total_supply;
  std::vector<double> profile;

  /// Midpoint of the buyer and seller prices; the uniform price when they agree.
  std::optional<double> clearing_price() const {
    if (!buyer_price || !seller_price) return std::nullopt;
    return 0.5 * (*buyer_price + *seller_price);
  }
};

inline RoundMetrics round_metrics(const ClearingOutcome& outcome, const MarketConstants& c,
                                  std::uint32_t day, int hour, std::vector<double> profile = {}) {
  RoundMetrics m;
  m.day = day;
  m.hour = hour;
  m.cleared_volume = outcome.cleared_volume;
  m.agent_surplus = agent_surplus(outcome, c).total();
  m.auctioneer_surplus = outcome.auctioneer_surplus;
  m.buyer_price = volume_weighted_price(outcome.fills, Side::Buy);
  m.seller_price = volume_weighted_price(outcome.fills, Side::Sell);
  m.total_demand = outcome.total_demand();
  m.total_supply = outcome.total_supply();
  if (m.total_supply.count() > 0) {
    m.ds_ratio = static_cast<double>(m.total_demand.count()) /
                 static_cast<double>(m.total_supply.count());
  }
  m.profile = std::move(profile);
  return m;
}

/// One round of a probe agent: the arm it played, the reward it got and the
/// reward every arm would have got with all other orders held fixed.
struct ProbeRound {
  std::uint32_t day = 0;
  std::size_t arm = 0;
  Policy policy = Policy::UCB1;
  std::uint32_t life = 0;  // bumps on each regeneration
  double realized = 0.0;
  std::vector<double> counterfactual;
};

struct ProbeTrace {
  AgentId agent = 0;
  AgentClass agent_class = AgentClass::PureBuyer;
  std::vector<ProbeRound> rounds;
};

struct RegretCurve {
  std::vector<double> cumulative;  // index D-1 holds the regret after D rounds
  std::vector<double> bound;       // average-regret shape scale·ln(D)/D

  double average(std::size_t d) const { return cumulative.at(d - 1) / static_cast<double>(d); }
};

/// Best fixed arm in hindsight minus realized reward, cumulated round by round.
inline RegretCurve empirical_regret(std::span<const ProbeRound> history, double bound_scale) {
  RegretCurve curve;
  if (history.empty()) return curve;
  std::vector<double> per_arm(history.front().counterfactual.size(), 0.0);
  double realized = 0.0;
  for (std::size_t d = 0; d < history.size(); ++d) {
    const auto& r = history[d];
    for (std::size_t m = 0; m < per_arm.size() && m < r.counterfactual.size(); ++m) {
      per_arm[m] += r.counterfactual[m];
    }
    realized += r.realized;
    const double best = *std::max_element(per_arm.begin(), per_arm.end());
    curve.cumulative.push_back(best - realized);
    const double n = static_cast<double>(d + 1);
    curve.bound.push_back(bound_scale * std::log(n) / n);
  }
  return curve;
}

/// UCB1-style constant for the bound shape: 8 per suboptimal arm.
inline double regret_bound_scale(std::size_t arms) { return 8.0 * static_cast<double>(arms - 1); }

struct SeriesStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t samples = 0;
};

inline SeriesStats series_stats(std::span<const double> xs) {
  SeriesStats s;
  s.samples = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(acc / static_cast<double>(xs.size()));
  return s;
}

struct ConvergenceSummary {
  std::size_t window_begin = 0;
  std::size_t window_end = 0;  // exclusive
  double center = 0.0;
  double band = 1.0;
  SeriesStats price;
  SeriesStats volume;
  std::optional<std::size_t> entry_round;  // empty: never settles inside the band

  bool converged() const { return entry_round.has_value(); }
};

/// Finds the first round from which the price stays within center ± band for
/// good (missing prices count as outside). With no center given, the mean
/// price over the final window is used.
inline ConvergenceSummary convergence_summary(std::span<const std::optional<double>> prices,
                                              std::span<const double> volumes, double band,
                                              std::size_t window,
                                              std::optional<double> center = std::nullopt) {
  if (window == 0 || prices.size() < window) {
    throw MarketError(Errc::PreconditionViolation, "series shorter than the summary window");
  }
  ConvergenceSummary s;
  s.band = band;
  s.window_end = prices.size();
  s.window_begin = prices.size() - window;
  std::vector<double> wp;
  for (std::size_t i = s.window_begin; i < s.window_end; ++i) {
    if (prices[i]) wp.push_back(*prices[i]);
  }
  s.price = series_stats(wp);
  if (volumes.size() >= s.window_end) {
    s.volume = series_stats(volumes.subspan(s.window_begin, window));
  }
  s.center = center.value_or(s.price.mean);
  const double tol = 1e-9;
  std::optional<std::size_t> entry;
  for (std::size_t i = prices.size(); i-- > 0;) {
    const bool inside = prices[i] && std::fabs(*prices[i] - s.center) <= band + tol;
    if (!inside) break;
    entry = i;
  }
  s.entry_round = entry;
  return s;
}

namespace detail {

inline std::string fixed_decimal(std::int64_t raw, std::int64_t scale, int digits) {
  const bool neg = raw < 0;
  const auto mag = static_cast<unsigned long long>(neg ? -raw : raw);
  const auto whole = mag / static_cast<unsigned long long>(scale);
  const auto frac = mag % static_cast<unsigned long long>(scale);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%llu.%0*llu", neg ? "-" : "", whole, digits, frac);
  return buf;
}

inline std::string optional_fixed(const std::optional<double>& v, int digits) {
  if (!v) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kCsvHeader =
    "mechanism,seed,hour,day,cleared_kwh,agent_surplus_cents,auctioneer_surplus_cents,"
    "buyer_price,seller_price,ds_ratio,supply_kwh,demand_kwh";

/// Writes the header and one row per round ordered by (hour, day). Quantities
/// carry 6 decimals and money 9, both exact; prices 4 decimals.
inline void emit_csv(std::ostream& os, Mechanism mechanism, std::uint64_t seed,
                     std::span<const RoundMetrics> rows) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rows[a].hour != rows[b].hour) return rows[a].hour < rows[b].hour;
    return rows[a].day < rows[b].day;
  });
  os << kCsvHeader << '\n';
  for (auto i : order) {
    const auto& r = rows[i];
    os << to_string(mechanism) << ',' << seed << ',' << r.hour << ',' << r.day << ','
       << detail::fixed_decimal(r.cleared_volume.count(), QuantityTag::scale, 6) << ','
       << detail::fixed_decimal(r.agent_surplus.count(), MoneyTag::scale, 9) << ','
       << detail::fixed_decimal(r.auctioneer_surplus.count(), MoneyTag::scale, 9) << ','
       << detail::optional_fixed(r.buyer_price, 4) << ','
       << detail::optional_fixed(r.seller_price, 4) << ','
       << detail::optional_fixed(r.ds_ratio, 6) << ','
       << detail::fixed_decimal(r.total_supply.count(), QuantityTag::scale, 6) << ','
       << detail::fixed_decimal(r.total_demand.count(), QuantityTag::scale, 6) << '\n';
  }
}

inline void emit_csv(const std::string& path, Mechanism mechanism, std::uint64_t seed,
                     std::span<const RoundMetrics> rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  emit_csv(os, mechanism, seed, rows);
  os.flush();
  if (!os) throw std::runtime_error("write failed for " + path);
}

}  // namespace p2pmarket

#endif  // P2PMARKET_METRICS_HPP
