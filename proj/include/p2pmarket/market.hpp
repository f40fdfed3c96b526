#ifndef P2PMARKET_MARKET_HPP
#define P2PMARKET_MARKET_HPP

// Domain types shared by every module: fixed-point money units, agents,
// orders and the market-wide constants.

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pmarket {

enum class Errc {
  NonPositiveQuantity,
  NegativePrice,
  NonFiniteValue,
  InvalidConstants,
  InternalInvariantViolation,
  ZeroQuantity,
  RewardRangeViolation,
  PreconditionViolation,
  ConfigError,
  DataError,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::NonPositiveQuantity: return "NonPositiveQuantity";
    case Errc::NegativePrice: return "NegativePrice";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::InvalidConstants: return "InvalidConstants";
    case Errc::InternalInvariantViolation: return "InternalInvariantViolation";
    case Errc::ZeroQuantity: return "ZeroQuantity";
    case Errc::RewardRangeViolation: return "RewardRangeViolation";
    case Errc::PreconditionViolation: return "PreconditionViolation";
    case Errc::ConfigError: return "ConfigError";
    case Errc::DataError: return "DataError";
  }
  return "Unknown";
}

class MarketError : public std::runtime_error {
 public:
  MarketError(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Integer fixed-point value. `Tag::scale` raw units make up one display unit.
template <class Tag>
class Fixed {
 public:
  using rep = std::int64_t;
  static constexpr rep scale = Tag::scale;

  constexpr Fixed() = default;

  static constexpr Fixed raw(rep v) {
    Fixed f;
    f.v_ = v;
    return f;
  }

  /// Rounds to the nearest raw unit. Throws on NaN/inf.
  static Fixed from_units(double v) {
    if (!std::isfinite(v)) {
      throw MarketError(Errc::NonFiniteValue, "non-finite fixed-point input");
    }
    return raw(static_cast<rep>(std::llround(v * static_cast<double>(scale))));
  }

  constexpr rep count() const { return v_; }
  double units() const { return static_cast<double>(v_) / static_cast<double>(scale); }

  constexpr Fixed operator-() const { return raw(-v_); }
  constexpr Fixed& operator+=(Fixed o) {
    v_ += o.v_;
    return *this;
  }
  constexpr Fixed& operator-=(Fixed o) {
    v_ -= o.v_;
    return *this;
  }
  friend constexpr Fixed operator+(Fixed a, Fixed b) { return raw(a.v_ + b.v_); }
  friend constexpr Fixed operator-(Fixed a, Fixed b) { return raw(a.v_ - b.v_); }
  friend constexpr Fixed operator*(Fixed a, rep n) { return raw(a.v_ * n); }
  friend constexpr auto operator<=>(Fixed, Fixed) = default;
  friend constexpr bool operator==(Fixed, Fixed) = default;

 private:
  rep v_ = 0;
};

struct PriceTag {
  static constexpr std::int64_t scale = 1000;  // millicents per cent
};
struct QuantityTag {
  static constexpr std::int64_t scale = 1'000'000;  // micro-kWh per kWh
};
struct MoneyTag {
  static constexpr std::int64_t scale = PriceTag::scale * QuantityTag::scale;  // nano-cents
};

/// ¢/kWh.
using Price = Fixed<PriceTag>;
/// kWh.
using Quantity = Fixed<QuantityTag>;
/// ¢.
using Money = Fixed<MoneyTag>;

inline Price cents(double c) { return Price::from_units(c); }
inline Quantity kwh(double q) { return Quantity::from_units(q); }

constexpr Money operator*(Price p, Quantity q) { return Money::raw(p.count() * q.count()); }
constexpr Money operator*(Quantity q, Price p) { return p * q; }

using AgentId = std::uint32_t;

enum class AgentClass { PureBuyer, PureSeller, Prosumer };

inline const char* to_string(AgentClass c) {
  switch (c) {
    case AgentClass::PureBuyer: return "buyer";
    case AgentClass::PureSeller: return "seller";
    case AgentClass::Prosumer: return "prosumer";
  }
  return "?";
}

enum class Side { Buy, Sell };

/// Per-hour mean demand and supply of one agent (its type).
struct AgentTypeProfile {
  std::vector<double> mean_demand_per_hour;
  std::vector<double> mean_supply_per_hour;
};

/// One agent's bid or ask. Quantity is a positive magnitude; `side` carries direction.
struct Order {
  AgentId agent = 0;
  Side side = Side::Buy;
  Price price;
  Quantity quantity;

  friend bool operator==(const Order&, const Order&) = default;
};

/// Net position of an agent in a round: negative for buyers, positive for sellers.
struct SignedQuantity {
  Quantity value;

  bool is_buyer() const { return value.count() < 0; }
  bool is_seller() const { return value.count() > 0; }
  Quantity magnitude() const { return value.count() < 0 ? -value : value; }
};

struct MarketConstants {
  Price p_ur;
  Price p_fit;
  std::vector<Price> arm_prices;
  double k = 0.5;

  std::size_t arms() const { return arm_prices.size(); }

  void validate() const {
    if (!(p_fit < p_ur)) {
      throw MarketError(Errc::InvalidConstants, "p_fit must be below p_ur");
    }
    if (arm_prices.size() < 2) {
      throw MarketError(Errc::InvalidConstants, "at least two price arms are required");
    }
    for (std::size_t m = 0; m < arm_prices.size(); ++m) {
      if (arm_prices[m].count() < 0) {
        throw MarketError(Errc::InvalidConstants, "arm prices must be non-negative");
      }
      if (m > 0 && !(arm_prices[m - 1] < arm_prices[m])) {
        throw MarketError(Errc::InvalidConstants, "arm prices must be strictly increasing");
      }
    }
    if (!(k >= 0.0 && k <= 1.0)) {
      throw MarketError(Errc::InvalidConstants, "k must lie in [0,1]");
    }
  }
};

/// UR 11 ¢, FIT 5 ¢, arms 0..14 ¢ in 1 ¢ steps, k = 0.5.
inline MarketConstants default_constants() {
  MarketConstants c;
  c.p_ur = cents(11);
  c.p_fit = cents(5);
  for (int p = 0; p <= 14; ++p) {
    c.arm_prices.push_back(cents(p));
  }
  c.k = 0.5;
  return c;
}

inline const Order& validate_order(const Order& order, const MarketConstants& /*constants*/) {
  if (order.quantity.count() <= 0) {
    throw MarketError(Errc::NonPositiveQuantity,
                      "order of agent " + std::to_string(order.agent) + " has quantity <= 0");
  }
  if (order.price.count() < 0) {
    throw MarketError(Errc::NegativePrice,
                      "order of agent " + std::to_string(order.agent) + " has a negative price");
  }
  return order;
}

/// Builds an order from floating-point inputs, rejecting non-finite values.
inline Order make_order(AgentId agent, Side side, double price_cents, double quantity_kwh) {
  Order o{agent, side, Price::from_units(price_cents), Quantity::from_units(quantity_kwh)};
  return o;
}

}  // namespace p2pmarket

#endif  // P2PMARKET_MARKET_HPP
