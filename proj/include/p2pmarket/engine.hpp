#ifndef P2PMARKET_ENGINE_HPP
#define P2PMARKET_ENGINE_HPP

// The repeated-auction loop. Each configured hour is an independent repeated
// auction with its own learners and regeneration process; all randomness is
// drawn from counter-keyed streams of the master seed.

#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "p2pmarket/clearing.hpp"
#include "p2pmarket/learning.hpp"
#include "p2pmarket/market.hpp"
#include "p2pmarket/metrics.hpp"
#include "p2pmarket/rng.hpp"

namespace p2pmarket {

struct HourlyMeans {
  int hour = 0;
  double demand_kwh = 0.0;
  double supply_kwh = 0.0;
};

/// Bundled hourly means for 9:00-15:00. Demand is the residential load
/// profile; supply is a synthetic PV profile (balanced at 9:00, surplus
/// midday, deficit late afternoon). Mirrors data/hourly_means.csv.
inline std::vector<HourlyMeans> default_hourly_means() {
  return {
      {9, 1.448, 1.448}, {10, 1.873, 2.600}, {11, 2.066, 3.400}, {12, 2.360, 3.600},
      {13, 2.713, 3.200}, {14, 3.113, 2.400}, {15, 3.449, 1.700},
  };
}

inline std::vector<HourlyMeans> parse_hourly_means(std::istream& is, const std::string& origin) {
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw MarketError(Errc::DataError, origin + ":" + std::to_string(lineno) + ": " + why);
  };
  if (!std::getline(is, line)) {
    ++lineno;
    fail("missing header");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "hour,demand_mean_kwh,supply_mean_kwh") {
    fail("expected header 'hour,demand_mean_kwh,supply_mean_kwh'");
  }
  std::vector<HourlyMeans> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c)) {
      fail("expected three comma-separated fields");
    }
    try {
      std::size_t used = 0;
      HourlyMeans row;
      row.hour = std::stoi(a, &used);
      if (used != a.size()) fail("bad hour '" + a + "'");
      row.demand_kwh = std::stod(b, &used);
      if (used != b.size()) fail("bad demand '" + b + "'");
      row.supply_kwh = std::stod(c, &used);
      if (used != c.size()) fail("bad supply '" + c + "'");
      if (!(row.demand_kwh >= 0.0) || !(row.supply_kwh >= 0.0)) fail("means must be >= 0");
      rows.push_back(row);
    } catch (const std::logic_error&) {
      fail("unparsable number");
    }
  }
  if (rows.empty()) fail("no data rows");
  return rows;
}

inline std::vector<HourlyMeans> load_hourly_means(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MarketError(Errc::DataError, "cannot open means file " + path);
  return parse_hourly_means(is, path);
}

struct ExperimentConfig {
  Mechanism mechanism = Mechanism::KDouble;
  MarketConstants constants = default_constants();
  std::size_t n_buyers = 1000;
  std::size_t n_sellers = 1000;
  std::size_t n_prosumers = 500;
  std::uint32_t n_days = 365;
  std::vector<int> hours{9, 10, 11, 12, 13, 14, 15};
  double regen_prob = 0.005;
  std::uint64_t seed = 1;
  std::array<double, 3> policy_mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // UCB1, UCB2, eps-greedy
  PolicyParams policy_params;
  std::string data;  // means CSV; empty selects the bundled table
  std::size_t probes_per_class = 5;

  std::size_t n_agents() const { return n_buyers + n_sellers + n_prosumers; }

  void validate() const {
    auto bad = [](const std::string& why) { throw MarketError(Errc::ConfigError, why); };
    try {
      constants.validate();
    } catch (const MarketError& e) {
      bad(e.what());
    }
    if (!(regen_prob >= 0.0 && regen_prob <= 1.0)) bad("regen_prob must lie in [0,1]");
    double sum = 0.0;
    for (double p : policy_mix) {
      if (!(p >= 0.0 && p <= 1.0)) bad("policy_mix entries must lie in [0,1]");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) bad("policy_mix must sum to 1");
    if (!(policy_params.epsilon > 0.0 && policy_params.epsilon < 1.0)) bad("epsilon must lie in (0,1)");
    if (!(policy_params.alpha > 0.0)) bad("alpha must be > 0");
    if (hours.empty()) bad("at least one hour is required");
    if (n_days == 0) bad("days must be >= 1");
    if (n_agents() > std::numeric_limits<AgentId>::max()) bad("too many agents");
  }

  std::vector<HourlyMeans> resolved_means() const {
    const auto table = data.empty() ? default_hourly_means() : load_hourly_means(data);
    std::vector<HourlyMeans> out;
    for (int h : hours) {
      auto it = std::find_if(table.begin(), table.end(), [h](const HourlyMeans& r) { return r.hour == h; });
      if (it == table.end()) {
        throw MarketError(Errc::DataError, "no means row for hour " + std::to_string(h) +
                                               (data.empty() ? " in bundled data" : " in " + data));
      }
      out.push_back(*it);
    }
    return out;
  }
};

struct AgentRuntime {
  AgentId id = 0;
  AgentClass agent_class = AgentClass::PureBuyer;
  AgentTypeProfile type;               // indexed by configured hour position
  std::vector<LearnerState> learners;  // one per configured hour
};

namespace detail {

inline Policy draw_policy(const std::array<double, 3>& mix, double u) {
  if (u < mix[0]) return Policy::UCB1;
  if (u < mix[0] + mix[1]) return Policy::UCB2;
  return Policy::EpsGreedy;
}

inline bool has_demand(AgentClass c) { return c != AgentClass::PureSeller; }
inline bool has_supply(AgentClass c) { return c != AgentClass::PureBuyer; }

inline AgentClass class_of(const ExperimentConfig& cfg, AgentId id) {
  if (id < cfg.n_buyers) return AgentClass::PureBuyer;
  if (id < cfg.n_buyers + cfg.n_sellers) return AgentClass::PureSeller;
  return AgentClass::Prosumer;
}

}  // namespace detail

/// Agents get dense ids: buyers first, then sellers, then prosumers. Type
/// means are drawn per hour from U(0.9·mean, 1.1·mean); the initial policy is
/// drawn once per agent from `policy_mix`.
inline std::vector<AgentRuntime> sample_population(const ExperimentConfig& cfg,
                                                   const std::vector<HourlyMeans>& means) {
  const CounterRng rng(cfg.seed);
  std::vector<AgentRuntime> agents;
  agents.reserve(cfg.n_agents());
  for (AgentId id = 0; id < cfg.n_agents(); ++id) {
    AgentRuntime a;
    a.id = id;
    a.agent_class = detail::class_of(cfg, id);
    const auto policy =
        detail::draw_policy(cfg.policy_mix, rng.uniform({Stream::PolicyAssign, 0, 0, id, 0}));
    for (std::size_t h = 0; h < means.size(); ++h) {
      const auto& m = means[h];
      const auto label = static_cast<std::uint64_t>(m.hour);
      const double d = detail::has_demand(a.agent_class)
                           ? rng.uniform({Stream::TypeSample, label, 0, id, 0}, 0.9 * m.demand_kwh, 1.1 * m.demand_kwh)
                           : 0.0;
      const double s = detail::has_supply(a.agent_class)
                           ? rng.uniform({Stream::TypeSample, label, 0, id, 1}, 0.9 * m.supply_kwh, 1.1 * m.supply_kwh)
                           : 0.0;
      a.type.mean_demand_per_hour.push_back(d);
      a.type.mean_supply_per_hour.push_back(s);
      a.learners.push_back(LearnerState::fresh(cfg.constants.arms(), policy));
    }
    agents.push_back(std::move(a));
  }
  return agents;
}

/// One agent's slice of state for a single hour-auction.
struct HourAgent {
  AgentId id = 0;
  AgentClass agent_class = AgentClass::PureBuyer;
  double demand_mean = 0.0;
  double supply_mean = 0.0;
  LearnerState learner;
  std::uint32_t life = 0;
};

inline std::vector<HourAgent> hour_agents(std::span<const AgentRuntime> population, std::size_t hour_index) {
  std::vector<HourAgent> out;
  out.reserve(population.size());
  for (const auto& a : population) {
    out.push_back({a.id, a.agent_class, a.type.mean_demand_per_hour.at(hour_index),
                   a.type.mean_supply_per_hour.at(hour_index), a.learners.at(hour_index), 0});
  }
  return out;
}

struct RoundContext {
  const ExperimentConfig* config = nullptr;
  CounterRng rng{0};
  std::size_t hour_index = 0;
  HourlyMeans means;
  std::uint32_t day = 0;
};

/// Actual demand/supply draws U(0.9·type, 1.1·type); prosumers net them.
inline std::vector<SignedQuantity> realize_quantities(std::span<const HourAgent> agents,
                                                      const RoundContext& ctx) {
  std::vector<SignedQuantity> q;
  q.reserve(agents.size());
  for (const auto& a : agents) {
    const auto h = static_cast<std::uint64_t>(ctx.means.hour);
    Quantity demand;
    Quantity supply;
    if (detail::has_demand(a.agent_class)) {
      demand = kwh(ctx.rng.uniform({Stream::Quantity, h, ctx.day, a.id, 0}, 0.9 * a.demand_mean,
                                   1.1 * a.demand_mean));
    }
    if (detail::has_supply(a.agent_class)) {
      supply = kwh(ctx.rng.uniform({Stream::Quantity, h, ctx.day, a.id, 1}, 0.9 * a.supply_mean,
                                   1.1 * a.supply_mean));
    }
    q.push_back({supply - demand});
  }
  return q;
}

inline std::size_t arm_of(const MarketConstants& c, Price p) {
  auto it = std::lower_bound(c.arm_prices.begin(), c.arm_prices.end(), p);
  if (it == c.arm_prices.end() || *it != p) {
    throw MarketError(Errc::PreconditionViolation, "price is not on the arm grid");
  }
  return static_cast<std::size_t>(it - c.arm_prices.begin());
}

/// Fraction of submitted orders at each arm price.
inline std::vector<double> population_profile(std::span<const Order> orders, const MarketConstants& c) {
  if (orders.empty()) return {};
  std::vector<double> f(c.arms(), 0.0);
  for (const auto& o : orders) f[arm_of(c, o.price)] += 1.0;
  for (auto& x : f) x /= static_cast<double>(orders.size());
  return f;
}

struct AgentReward {
  AgentId agent = 0;
  std::size_t arm = 0;
  double reward = 0.0;
};

struct RoundRecord {
  std::uint32_t day = 0;
  int hour = 0;
  std::vector<Order> orders;
  ClearingOutcome outcome;
  std::vector<AgentReward> rewards;
  std::vector<double> profile;
  std::optional<double> ds_ratio;
  std::size_t regenerated = 0;
};

namespace detail {

/// Per-agent view of an outcome's fills, indexed by AgentId.
class FillIndex {
 public:
  FillIndex(const ClearingOutcome& outcome, std::size_t n_agents) : offsets_(n_agents + 1, 0) {
    for (const auto& f : outcome.fills) ++offsets_[f.agent + 1];
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    fills_.resize(outcome.fills.size());
    auto cursor = offsets_;
    for (const auto& f : outcome.fills) fills_[cursor[f.agent]++] = {f.quantity, f.price};
  }

  std::span<const PricedQuantity> of(AgentId id) const {
    return {fills_.data() + offsets_[id], offsets_[id + 1] - offsets_[id]};
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<PricedQuantity> fills_;
};

inline RoundResult result_for(SignedQuantity q, std::span<const PricedQuantity> fills) {
  Quantity filled;
  for (const auto& f : fills) filled += f.quantity;
  return {q, fills, q.magnitude() - filled};
}

}  // namespace detail

/// Reward the probe would have received at every arm, all other orders fixed.
/// `stacks` must hold the full book including `mine`; it is restored on return.
inline std::vector<double> counterfactual_rewards(MarketStacks& stacks, const Order& mine, Mechanism mechanism,
                                                  const MarketConstants& c) {
  remove_order(stacks, mine.agent, mine.side);
  const SignedQuantity q{mine.side == Side::Buy ? -mine.quantity : mine.quantity};
  std::vector<double> rewards;
  rewards.reserve(c.arms());
  std::vector<PricedQuantity> fills;
  for (const auto price : c.arm_prices) {
    insert_order(stacks, Order{mine.agent, mine.side, price, mine.quantity});
    const auto outcome = clear(mechanism, stacks, c);
    remove_order(stacks, mine.agent, mine.side);
    fills.clear();
    for (const auto& f : outcome.fills) {
      if (f.agent == mine.agent) fills.push_back({f.quantity, f.price});
    }
    rewards.push_back(normalized_reward(detail::result_for(q, fills), c));
  }
  insert_order(stacks, mine);
  return rewards;
}

inline std::vector<double> counterfactual_rewards(std::span<const Order> orders, AgentId probe,
                                                  Mechanism mechanism, const MarketConstants& c) {
  auto it = std::find_if(orders.begin(), orders.end(), [probe](const Order& o) { return o.agent == probe; });
  if (it == orders.end()) {
    throw MarketError(Errc::PreconditionViolation, "probe " + std::to_string(probe) + " is not active");
  }
  auto stacks = build_stacks(orders);
  return counterfactual_rewards(stacks, *it, mechanism, c);
}

/// One auction round for one hour: realize quantities, select arms, clear,
/// reward, learn, then regenerate.
inline RoundRecord run_round(std::vector<HourAgent>& agents, const RoundContext& ctx) {
  const auto& cfg = *ctx.config;
  const auto& c = cfg.constants;
  const auto h = static_cast<std::uint64_t>(ctx.means.hour);
  RoundRecord rec;
  rec.day = ctx.day;
  rec.hour = ctx.means.hour;

  const auto quantities = realize_quantities(agents, ctx);
  std::vector<std::size_t> arms(agents.size(), 0);
  rec.orders.reserve(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto q = quantities[i];
    if (q.value.count() == 0) continue;
    auto& a = agents[i];
    const double u0 = ctx.rng.uniform({Stream::Selection, h, ctx.day, a.id, 0});
    const double u1 = ctx.rng.uniform({Stream::Selection, h, ctx.day, a.id, 1});
    arms[i] = next_arm(a.learner, cfg.policy_params, u0, u1);
    rec.orders.push_back(validate_order(
        Order{a.id, q.is_buyer() ? Side::Buy : Side::Sell, c.arm_prices[arms[i]], q.magnitude()}, c));
  }

  rec.outcome = clear(cfg.mechanism, build_stacks(rec.orders), c);
  rec.profile = population_profile(rec.orders, c);
  if (rec.outcome.total_supply().count() > 0) {
    rec.ds_ratio = static_cast<double>(rec.outcome.total_demand().count()) /
                   static_cast<double>(rec.outcome.total_supply().count());
  }

  const detail::FillIndex index(rec.outcome, agents.size());
  rec.rewards.reserve(rec.orders.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto q = quantities[i];
    if (q.value.count() == 0) continue;
    auto& a = agents[i];
    const double pi = normalized_reward(detail::result_for(q, index.of(a.id)), c);
    update_state(a.learner, arms[i], pi);
    rec.rewards.push_back({a.id, arms[i], pi});
  }

  for (auto& a : agents) {
    if (!(ctx.rng.uniform({Stream::Regeneration, h, ctx.day, a.id, 0}) < cfg.regen_prob)) continue;
    const auto& m = ctx.means;
    if (detail::has_demand(a.agent_class)) {
      a.demand_mean = ctx.rng.uniform({Stream::Regeneration, h, ctx.day, a.id, 1}, 0.9 * m.demand_kwh,
                                      1.1 * m.demand_kwh);
    }
    if (detail::has_supply(a.agent_class)) {
      a.supply_mean = ctx.rng.uniform({Stream::Regeneration, h, ctx.day, a.id, 2}, 0.9 * m.supply_kwh,
                                      1.1 * m.supply_kwh);
    }
    const auto policy =
        detail::draw_policy(cfg.policy_mix, ctx.rng.uniform({Stream::Regeneration, h, ctx.day, a.id, 3}));
    a.learner = LearnerState::fresh(c.arms(), policy);
    ++a.life;
    ++rec.regenerated;
  }
  return rec;
}

struct RewardStats {
  std::uint64_t count = 0;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::uint64_t out_of_range = 0;
};

struct HourRun {
  int hour = 0;
  std::vector<RoundMetrics> rounds;
  std::vector<ProbeTrace> probes;
  RewardStats rewards;
  std::uint64_t regenerations = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<HourRun> hours;

  std::vector<RoundMetrics> all_rounds() const {
    std::vector<RoundMetrics> out;
    for (const auto& h : hours) out.insert(out.end(), h.rounds.begin(), h.rounds.end());
    return out;
  }

  const HourRun& hour(int label) const {
    for (const auto& h : hours) {
      if (h.hour == label) return h;
    }
    throw MarketError(Errc::PreconditionViolation, "hour " + std::to_string(label) + " was not run");
  }
};

struct RunOptions {
  std::size_t threads = 1;
  /// Called after every round; serialized across hour threads.
  std::function<void(const RoundRecord&)> on_round;
  /// Replaces the default probe set when given.
  std::optional<std::vector<AgentId>> probes;
};

/// Probes are the first `probes_per_class` agents of each class.
inline std::vector<AgentId> probe_ids(const ExperimentConfig& cfg) {
  std::vector<AgentId> ids;
  const std::size_t firsts[3] = {0, cfg.n_buyers, cfg.n_buyers + cfg.n_sellers};
  const std::size_t sizes[3] = {cfg.n_buyers, cfg.n_sellers, cfg.n_prosumers};
  for (int k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < std::min(cfg.probes_per_class, sizes[k]); ++j) {
      ids.push_back(static_cast<AgentId>(firsts[k] + j));
    }
  }
  return ids;
}

/// Agents that start with `policy` and are never regenerated during the
/// hour-auction of `hour`. Regeneration draws do not depend on learning,
/// so this is known before the run.
inline std::vector<AgentId> lifelong_agents(const ExperimentConfig& cfg, int hour, Policy policy,
                                            AgentClass agent_class, std::size_t limit) {
  const CounterRng rng(cfg.seed);
  std::vector<AgentId> ids;
  const auto h = static_cast<std::uint64_t>(hour);
  for (AgentId id = 0; id < cfg.n_agents() && ids.size() < limit; ++id) {
    if (detail::class_of(cfg, id) != agent_class) continue;
    if (detail::draw_policy(cfg.policy_mix, rng.uniform({Stream::PolicyAssign, 0, 0, id, 0})) != policy) continue;
    bool regenerates = false;
    for (std::uint32_t day = 0; day < cfg.n_days && !regenerates; ++day) {
      regenerates = rng.uniform({Stream::Regeneration, h, day, id, 0}) < cfg.regen_prob;
    }
    if (!regenerates) ids.push_back(id);
  }
  return ids;
}

inline HourRun run_hour(const ExperimentConfig& cfg, std::span<const AgentRuntime> population,
                        std::size_t hour_index, const HourlyMeans& means,
                        const std::function<void(const RoundRecord&)>& on_round = {},
                        const std::optional<std::vector<AgentId>>& probe_override = std::nullopt) {
  HourRun run;
  run.hour = means.hour;
  auto agents = hour_agents(population, hour_index);
  const auto probes = probe_override ? *probe_override : probe_ids(cfg);
  for (auto id : probes) {
    if (id >= agents.size()) throw MarketError(Errc::ConfigError, "probe id " + std::to_string(id) + " out of range");
  }
  for (auto id : probes) run.probes.push_back({id, agents[id].agent_class, {}});

  RoundContext ctx;
  ctx.config = &cfg;
  ctx.rng = CounterRng(cfg.seed);
  ctx.hour_index = hour_index;
  ctx.means = means;
  std::vector<std::pair<std::size_t, Policy>> probe_state(probes.size());
  for (std::uint32_t day = 0; day < cfg.n_days; ++day) {
    ctx.day = day;
    for (std::size_t p = 0; p < probes.size(); ++p) {
      probe_state[p] = {agents[probes[p]].life, agents[probes[p]].learner.policy};
    }
    auto rec = run_round(agents, ctx);
    for (const auto& r : rec.rewards) {
      ++run.rewards.count;
      run.rewards.min = std::min(run.rewards.min, r.reward);
      run.rewards.max = std::max(run.rewards.max, r.reward);
      if (!(r.reward >= 0.0 && r.reward <= 1.0)) ++run.rewards.out_of_range;
    }
    run.regenerations += rec.regenerated;
    std::optional<MarketStacks> book;
    for (std::size_t p = 0; p < probes.size(); ++p) {
      auto it = std::find_if(rec.rewards.begin(), rec.rewards.end(),
                             [&](const AgentReward& r) { return r.agent == probes[p]; });
      if (it == rec.rewards.end()) continue;
      ProbeRound pr;
      pr.day = day;
      pr.arm = it->arm;
      pr.life = static_cast<std::uint32_t>(probe_state[p].first);
      pr.policy = probe_state[p].second;
      pr.realized = it->reward;
      if (!book) book = build_stacks(rec.orders);
      const auto mine = std::find_if(rec.orders.begin(), rec.orders.end(),
                                     [&](const Order& o) { return o.agent == probes[p]; });
      pr.counterfactual = counterfactual_rewards(*book, *mine, cfg.mechanism, cfg.constants);
      run.probes[p].rounds.push_back(std::move(pr));
    }
    run.rounds.push_back(round_metrics(rec.outcome, cfg.constants, day, means.hour, rec.profile));
    if (on_round) on_round(rec);
  }
  return run;
}

/// Runs every configured hour as an independent repeated auction of
/// `n_days` rounds. Output depends only on the config, not on `threads`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {}) {
  cfg.validate();
  const auto means = cfg.resolved_means();
  const auto population = sample_population(cfg, means);
  ExperimentResult result;
  result.config = cfg;
  result.hours.resize(means.size());

  std::mutex sink_mutex;
  std::function<void(const RoundRecord&)> sink;
  if (options.on_round) {
    sink = [&](const RoundRecord& r) {
      std::lock_guard lock(sink_mutex);
      options.on_round(r);
    };
  }
  const auto workers = std::max<std::size_t>(1, std::min(options.threads, means.size()));
  if (workers == 1) {
    for (std::size_t h = 0; h < means.size(); ++h) {
      result.hours[h] = run_hour(cfg, population, h, means[h], sink, options.probes);
    }
    return result;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t h; (h = next.fetch_add(1)) < means.size();) {
          result.hours[h] = run_hour(cfg, population, h, means[h], sink, options.probes);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

}  // namespace p2pmarket

#endif  // P2PMARKET_ENGINE_HPP
