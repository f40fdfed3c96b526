#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "p2pmarket/config.hpp"

using namespace p2pmarket;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test.cfg");
}

std::string config_error(const std::string& text) {
  try {
    parse(text);
  } catch (const MarketError& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
    return e.what();
  }
  ADD_FAILURE() << "no error for: " << text;
  return {};
}

}  // namespace

TEST(Config, EmptyGivesDefaults) {
  const auto cfg = parse("# nothing here\n\n");
  const ExperimentConfig def;
  EXPECT_EQ(cfg.mechanism, Mechanism::KDouble);
  EXPECT_EQ(cfg.n_agents(), 2500u);
  EXPECT_EQ(cfg.n_days, 365u);
  EXPECT_EQ(cfg.hours, def.hours);
  EXPECT_DOUBLE_EQ(cfg.regen_prob, 0.005);
  EXPECT_EQ(cfg.constants.arms(), 15u);
  EXPECT_DOUBLE_EQ(cfg.policy_params.epsilon, 0.1);
  EXPECT_DOUBLE_EQ(cfg.policy_params.alpha, 0.1);
}

TEST(Config, ParsesEveryKey) {
  const auto cfg = parse(
      "mechanism = mvm\n"
      "p_ur = 12\n"
      "p_fit = 4   # trailing comment\n"
      "arm_prices = 0,2,4,6,8,10,12\n"
      "k = 0.25\n"
      "n_buyers = 10\n"
      "n_sellers = 20\n"
      "n_prosumers = 5\n"
      "n_days = 30\n"
      "hours = 9, 15\n"
      "regen_prob = 0.01\n"
      "seed = 77\n"
      "policy_mix = 0.5, 0.25, 0.25\n"
      "epsilon = 0.2\n"
      "alpha = 0.5\n"
      "data = means.csv\n"
      "probes = 3\n");
  EXPECT_EQ(cfg.mechanism, Mechanism::MVM);
  EXPECT_EQ(cfg.constants.p_ur, cents(12));
  EXPECT_EQ(cfg.constants.p_fit, cents(4));
  EXPECT_EQ(cfg.constants.arms(), 7u);
  EXPECT_DOUBLE_EQ(cfg.constants.k, 0.25);
  EXPECT_EQ(cfg.n_buyers, 10u);
  EXPECT_EQ(cfg.n_sellers, 20u);
  EXPECT_EQ(cfg.n_prosumers, 5u);
  EXPECT_EQ(cfg.n_days, 30u);
  EXPECT_EQ(cfg.hours, (std::vector<int>{9, 15}));
  EXPECT_DOUBLE_EQ(cfg.regen_prob, 0.01);
  EXPECT_EQ(cfg.seed, 77u);
  EXPECT_DOUBLE_EQ(cfg.policy_mix[0], 0.5);
  EXPECT_DOUBLE_EQ(cfg.policy_params.epsilon, 0.2);
  EXPECT_DOUBLE_EQ(cfg.policy_params.alpha, 0.5);
  EXPECT_EQ(cfg.data, "means.csv");
  EXPECT_EQ(cfg.probes_per_class, 3u);
}

TEST(Config, OutOfRangeK) {
  EXPECT_NE(config_error("k = 1.5\n").find("test.cfg"), std::string::npos);
}

TEST(Config, UnknownKeyNamesLine) {
  const auto msg = config_error("seed = 3\nbogus = 1\n");
  EXPECT_NE(msg.find("test.cfg:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
}

TEST(Config, DuplicateKey) {
  const auto msg = config_error("seed = 3\n\nseed = 4\n");
  EXPECT_NE(msg.find("test.cfg:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(Config, MalformedValues) {
  config_error("seed\n");
  config_error("n_days = ten\n");
  config_error("n_days = 0\n");
  config_error("regen_prob = 2\n");
  config_error("mechanism = dutch\n");
  config_error("policy_mix = 0.5,0.5\n");
  config_error("policy_mix = 0.5,0.5,0.5\n");
  config_error("arm_prices = 3,2,1\n");
  config_error("epsilon = 0\n");
  config_error("p_ur = nan\n");
}

TEST(Config, MissingFile) {
  try {
    load_config("/nonexistent/run.cfg");
    FAIL();
  } catch (const MarketError& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
  }
}

TEST(Config, DumpRoundTrips) {
  auto cfg = parse("regen_prob = 0.005\nk = 0.3\nhours = 10,11\nseed = 9\nmechanism = mcafee\n");
  const auto again = parse(dump_config(cfg));
  EXPECT_EQ(dump_config(again), dump_config(cfg));
  EXPECT_EQ(again.regen_prob, 0.005);
  EXPECT_EQ(again.constants.k, 0.3);
  EXPECT_EQ(again.mechanism, Mechanism::McAfee);
  EXPECT_EQ(again.hours, cfg.hours);
  EXPECT_EQ(again.constants.arm_prices, cfg.constants.arm_prices);
}
