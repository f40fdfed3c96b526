#ifndef P2PMARKET_CLI_HPP
#define P2PMARKET_CLI_HPP

// Command-line front end: run, sweep, verify and show-config.
// Exit codes: 0 success, 2 config/usage error, 3 runtime error, 4 verification failure.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "p2pmarket/config.hpp"
#include "p2pmarket/engine.hpp"
#include "p2pmarket/metrics.hpp"
#include "p2pmarket/oracle.hpp"

namespace p2pmarket {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitVerify = 4 };

namespace detail {

inline nlohmann::json to_json(const SeriesStats& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"samples", s.samples}};
}

inline nlohmann::json summarize_hour(const HourRun& h, const ExperimentConfig& cfg) {
  std::vector<std::optional<double>> prices;
  std::vector<double> volumes;
  std::vector<double> agent;
  std::vector<double> auctioneer;
  for (const auto& r : h.rounds) {
    prices.push_back(r.clearing_price());
    volumes.push_back(r.cleared_volume.units());
    agent.push_back(r.agent_surplus.units());
    auctioneer.push_back(r.auctioneer_surplus.units());
  }
  nlohmann::json j = {{"hour", h.hour}, {"rounds", h.rounds.size()}, {"regenerations", h.regenerations}};
  const std::size_t window = std::min<std::size_t>(100, prices.size());
  if (window > 0) {
    const auto s = convergence_summary(prices, volumes, 1.0, window);
    j["convergence"] = {{"window_begin", s.window_begin},
                        {"window_end", s.window_end},
                        {"center", s.center},
                        {"band", s.band},
                        {"price", to_json(s.price)},
                        {"volume", to_json(s.volume)},
                        {"entry_round", s.entry_round ? nlohmann::json(*s.entry_round) : nlohmann::json()},
                        {"converged", s.converged()}};
    const auto tail = [&](const std::vector<double>& xs) {
      return to_json(series_stats(std::span<const double>(xs).subspan(xs.size() - window)));
    };
    j["final_window"] = {{"agent_surplus_cents", tail(agent)}, {"auctioneer_surplus_cents", tail(auctioneer)}};
  }
  j["rewards"] = {{"count", h.rewards.count}, {"min", h.rewards.min}, {"max", h.rewards.max},
                  {"out_of_range", h.rewards.out_of_range}};
  auto probes = nlohmann::json::array();
  const auto scale = regret_bound_scale(cfg.constants.arms());
  for (const auto& p : h.probes) {
    const auto curve = empirical_regret(p.rounds, scale);
    nlohmann::json pj = {{"agent", p.agent}, {"class", to_string(p.agent_class)}, {"rounds", p.rounds.size()}};
    if (!curve.cumulative.empty()) {
      pj["cumulative_regret"] = curve.cumulative.back();
      pj["average_regret"] = curve.average(curve.cumulative.size());
    }
    probes.push_back(std::move(pj));
  }
  j["probes"] = std::move(probes);
  return j;
}

inline std::string run_stem(Mechanism m, std::uint64_t seed) {
  return std::string(to_string(m)) + "_seed" + std::to_string(seed);
}

/// Runs one experiment and writes <stem>.csv and <stem>.summary.json under `out`.
inline void run_and_emit(const ExperimentConfig& cfg, const std::filesystem::path& out, std::size_t threads) {
  RunOptions opt;
  opt.threads = threads;
  const auto result = run_experiment(cfg, opt);
  std::filesystem::create_directories(out);
  const auto stem = run_stem(cfg.mechanism, cfg.seed);
  emit_csv((out / (stem + ".csv")).string(), cfg.mechanism, cfg.seed, result.all_rounds());
  nlohmann::json summary = {{"mechanism", std::string(to_string(cfg.mechanism))}, {"seed", cfg.seed}};
  auto hours = nlohmann::json::array();
  for (const auto& h : result.hours) hours.push_back(summarize_hour(h, cfg));
  summary["hours"] = std::move(hours);
  const auto path = out / (stem + ".summary.json");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << summary.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split_list(s)) {
    try {
      seeds.push_back(parse_number<std::uint64_t>(part));
    } catch (const std::exception&) {
      throw MarketError(Errc::ConfigError, "--seed: bad seed '" + part + "'");
    }
  }
  if (seeds.empty()) throw MarketError(Errc::ConfigError, "--seed: empty list");
  return seeds;
}

inline std::vector<Mechanism> parse_mechanisms(const std::string& s) {
  if (s == "all") return {std::begin(kAllMechanisms), std::end(kAllMechanisms)};
  std::vector<Mechanism> out;
  for (const auto& part : split_list(s)) {
    const auto m = parse_mechanism(part);
    if (!m) throw MarketError(Errc::ConfigError, "--mechanism: unknown mechanism '" + part + "'");
    out.push_back(*m);
  }
  return out;
}

}  // namespace detail

/// Parses `argv` and runs the chosen command. `clear_fn` backs the verify
/// command only.
inline int parse_and_run(int argc, const char* const* argv, std::ostream& out = std::cout,
                         std::ostream& err = std::cerr, const ClearFn& clear_fn = default_clear()) {
  CLI::App app{"p2pmarket: repeated peer-to-peer energy double auctions with learning agents"};
  app.require_subcommand(1);

  std::string config_path;
  std::string mechanism;
  std::string seeds;
  std::optional<std::uint32_t> days;
  std::string out_dir = "out";
  std::optional<std::size_t> probes;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("--mechanism", mechanism, "k-double, vickrey, mcafee, mvm (sweep also: all or a list)");
    cmd->add_option("--seed", seeds, "seed (sweep: comma-separated list)");
    cmd->add_option("--days", days, "rounds per hour-auction");
    cmd->add_option("--probes", probes, "regret probes per agent class");
  };
  auto* run = app.add_subcommand("run", "run one experiment");
  add_common(run);
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--jobs", jobs, "worker threads across hours");
  auto* sweep = app.add_subcommand("sweep", "run a mechanism x seed grid");
  add_common(sweep);
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--jobs", jobs, "concurrent runs");
  auto* verify = app.add_subcommand("verify", "run the oracle suites");
  std::string verify_seed = "1";
  std::size_t books = VerifyOptions{}.books;
  std::string report_path;
  verify->add_option("--seed", verify_seed, "oracle seed");
  verify->add_option("--books", books, "random books per mechanism");
  verify->add_option("--out", report_path, "write the JSON report here (default: stdout)");
  auto* show = app.add_subcommand("show-config", "print the effective config");
  add_common(show);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::vector<std::uint64_t> seed_list;
  std::vector<Mechanism> mechanisms;
  ExperimentConfig cfg;
  try {
    if (!verify->parsed()) {
      if (!config_path.empty()) cfg = load_config(config_path);
      if (!seeds.empty()) {
        seed_list = detail::parse_seeds(seeds);
        cfg.seed = seed_list.front();
      }
      if (!mechanism.empty()) {
        mechanisms = detail::parse_mechanisms(mechanism);
        cfg.mechanism = mechanisms.front();
      }
      if (days) cfg.n_days = *days;
      if (probes) cfg.probes_per_class = *probes;
      if ((run->parsed() || show->parsed()) && (seed_list.size() > 1 || mechanisms.size() > 1)) {
        throw MarketError(Errc::ConfigError, "run takes a single --seed and --mechanism");
      }
      cfg.validate();
      cfg.resolved_means();
      if (seed_list.empty()) seed_list = {cfg.seed};
      if (mechanisms.empty()) mechanisms = {cfg.mechanism};
    }
  } catch (const MarketError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (show->parsed()) {
      out << dump_config(cfg);
      return kExitOk;
    }
    if (verify->parsed()) {
      VerifyOptions opt;
      opt.seed = detail::parse_seeds(verify_seed).front();
      opt.books = books;
      const auto res = run_verification(default_constants(), opt, clear_fn);
      const auto text = res.report.dump(2);
      if (report_path.empty()) {
        out << text << '\n';
      } else {
        std::ofstream os(report_path);
        if (!os) throw std::runtime_error("cannot open " + report_path + " for writing");
        os << text << '\n';
      }
      if (!res.passed) {
        err << "verification failed\n";
        if (!report_path.empty()) err << text << '\n';
        return kExitVerify;
      }
      return kExitOk;
    }
    if (run->parsed()) {
      detail::run_and_emit(cfg, out_dir, jobs);
      out << "wrote " << (std::filesystem::path(out_dir) / detail::run_stem(cfg.mechanism, cfg.seed)).string()
          << ".csv\n";
      return kExitOk;
    }
    // sweep
    std::vector<ExperimentConfig> grid;
    for (auto m : mechanisms) {
      for (auto s : seed_list) {
        auto c = cfg;
        c.mechanism = m;
        c.seed = s;
        grid.push_back(std::move(c));
      }
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::string first_error;
    const auto workers = std::max<std::size_t>(1, std::min(jobs, grid.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) {
          try {
            detail::run_and_emit(grid[i], out_dir, 1);
          } catch (const std::exception& e) {
            std::lock_guard lock(err_mutex);
            if (first_error.empty()) first_error = e.what();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (!first_error.empty()) throw std::runtime_error(first_error);
    out << "wrote " << grid.size() << " runs under " << out_dir << '\n';
    return kExitOk;
  } catch (const MarketError& e) {
    const bool config = e.code() == Errc::ConfigError || e.code() == Errc::DataError;
    err << (config ? "config error: " : "runtime error: ") << e.what() << '\n';
    return config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace p2pmarket

#endif  // P2PMARKET_CLI_HPP
