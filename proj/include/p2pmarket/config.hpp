#ifndef P2PMARKET_CONFIG_HPP
#define P2PMARKET_CONFIG_HPP

// Experiment config files: one `key = value` per line, `#` starts a comment,
// blank lines are ignored, list values are comma-separated. Missing keys keep
// their defaults; unknown or repeated keys are errors. dump_config prints
// every key so its output can be fed back verbatim.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "p2pmarket/engine.hpp"

namespace p2pmarket {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += f(xs[i]);
  }
  return out;
}

}  // namespace detail

/// Applies one key to `cfg`. Throws ConfigError naming the key.
inline void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_number;
  using detail::split_list;
  try {
    if (key == "mechanism") {
      const auto m = parse_mechanism(value);
      if (!m) throw std::invalid_argument("unknown mechanism '" + value + "'");
      cfg.mechanism = *m;
    } else if (key == "p_ur") {
      cfg.constants.p_ur = cents(parse_number<double>(value));
    } else if (key == "p_fit") {
      cfg.constants.p_fit = cents(parse_number<double>(value));
    } else if (key == "arm_prices") {
      cfg.constants.arm_prices.clear();
      for (const auto& s : split_list(value)) cfg.constants.arm_prices.push_back(cents(parse_number<double>(s)));
    } else if (key == "k") {
      cfg.constants.k = parse_number<double>(value);
    } else if (key == "n_buyers") {
      cfg.n_buyers = parse_number<std::size_t>(value);
    } else if (key == "n_sellers") {
      cfg.n_sellers = parse_number<std::size_t>(value);
    } else if (key == "n_prosumers") {
      cfg.n_prosumers = parse_number<std::size_t>(value);
    } else if (key == "n_days") {
      cfg.n_days = parse_number<std::uint32_t>(value);
    } else if (key == "hours") {
      cfg.hours.clear();
      for (const auto& s : split_list(value)) cfg.hours.push_back(parse_number<int>(s));
    } else if (key == "regen_prob") {
      cfg.regen_prob = parse_number<double>(value);
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(value);
    } else if (key == "policy_mix") {
      const auto parts = split_list(value);
      if (parts.size() != 3) throw std::invalid_argument("expected three weights (ucb1,ucb2,eps-greedy)");
      for (std::size_t i = 0; i < 3; ++i) cfg.policy_mix[i] = parse_number<double>(parts[i]);
    } else if (key == "epsilon") {
      cfg.policy_params.epsilon = parse_number<double>(value);
    } else if (key == "alpha") {
      cfg.policy_params.alpha = parse_number<double>(value);
    } else if (key == "data") {
      cfg.data = value;
    } else if (key == "probes") {
      cfg.probes_per_class = parse_number<std::size_t>(value);
    } else {
      throw MarketError(Errc::ConfigError, "unknown key '" + key + "'");
    }
  } catch (const MarketError&) {
    throw;
  } catch (const std::exception& e) {
    throw MarketError(Errc::ConfigError, "key '" + key + "': " + e.what());
  }
}

inline ExperimentConfig parse_config(std::istream& is, const std::string& origin) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw MarketError(Errc::ConfigError, where + "expected 'key = value'");
    const auto key = detail::trim(std::string_view(text).substr(0, eq));
    const auto value = detail::trim(std::string_view(text).substr(eq + 1));
    if (!seen.insert(key).second) throw MarketError(Errc::ConfigError, where + "duplicate key '" + key + "'");
    try {
      apply_config_key(cfg, key, value);
    } catch (const MarketError& e) {
      throw MarketError(Errc::ConfigError, where + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const MarketError& e) {
    throw MarketError(Errc::ConfigError, origin + ": " + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MarketError(Errc::ConfigError, "cannot open config file " + path);
  return parse_config(is, path);
}

/// Every key in load order; doubles print with 17 significant digits.
inline std::string dump_config(const ExperimentConfig& cfg) {
  using detail::format_double;
  std::ostringstream os;
  const auto price = [](Price p) { return format_double(p.units()); };
  os << "mechanism = " << to_string(cfg.mechanism) << '\n'
     << "p_ur = " << price(cfg.constants.p_ur) << '\n'
     << "p_fit = " << price(cfg.constants.p_fit) << '\n'
     << "arm_prices = " << detail::join(cfg.constants.arm_prices, price) << '\n'
     << "k = " << format_double(cfg.constants.k) << '\n'
     << "n_buyers = " << cfg.n_buyers << '\n'
     << "n_sellers = " << cfg.n_sellers << '\n'
     << "n_prosumers = " << cfg.n_prosumers << '\n'
     << "n_days = " << cfg.n_days << '\n'
     << "hours = " << detail::join(cfg.hours, [](int h) { return std::to_string(h); }) << '\n'
     << "regen_prob = " << format_double(cfg.regen_prob) << '\n'
     << "seed = " << cfg.seed << '\n'
     << "policy_mix = "
     << detail::join(std::vector<double>(cfg.policy_mix.begin(), cfg.policy_mix.end()), format_double) << '\n'
     << "epsilon = " << format_double(cfg.policy_params.epsilon) << '\n'
     << "alpha = " << format_double(cfg.policy_params.alpha) << '\n'
     << "data = " << cfg.data << '\n'
     << "probes = " << cfg.probes_per_class << '\n';
  return os.str();
}

}  // namespace p2pmarket

#endif  // P2PMARKET_CONFIG_HPP
