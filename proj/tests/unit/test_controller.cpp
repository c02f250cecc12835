#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "phev/battery.hpp"
#include "phev/controller.hpp"

using namespace phev::controller;
using phev::drivetrain::Mode;

namespace {
int idx(Mode m) { return static_cast<int>(m); }

bool strictly_highest(const Activations& a, Mode m) {
  for (int i = 0; i < phev::drivetrain::kModeCount; ++i) {
    if (i != idx(m) && a[i] >= a[idx(m)]) return false;
  }
  return true;
}
}  // namespace

TEST_CASE("membership shapes") {
  const auto tri = MembershipFunction::triangular(0, 50, 100);
  CHECK(tri(50.0) == 1.0);
  CHECK(tri(25.0) == doctest::Approx(0.5));
  CHECK(tri(75.0) == doctest::Approx(0.5));
  CHECK(tri(-1.0) == 0.0);
  CHECK(tri(101.0) == 0.0);

  const auto trap = MembershipFunction::trapezoidal(10, 20, 30, 40);
  CHECK(trap(25.0) == 1.0);
  CHECK(trap(15.0) == doctest::Approx(0.5));
  CHECK(trap(35.0) == doctest::Approx(0.5));
  const auto shoulder = MembershipFunction::trapezoidal(0, 0, 10, 20);
  CHECK(shoulder(0.0) == 1.0);

  CHECK_THROWS(MembershipFunction::triangular(5, 1, 10).validate());
}

TEST_CASE("fuzzify returns one degree per term") {
  const auto cfg = default_rulebase();
  const auto& speed = cfg.variables[0];
  const auto mu = fuzzify(30.0, speed);
  CHECK(mu.size() == speed.terms.size());
  CHECK(*std::max_element(mu.begin(), mu.end()) > 0.0);
}

TEST_CASE("default rule base is structurally valid") {
  const auto cfg = default_rulebase();
  CHECK(cfg.rules.size() == kRuleCount);
  CHECK_NOTHROW(cfg.validate());
  for (std::size_t i = 0; i < kInputNames.size(); ++i) CHECK(cfg.variables[i].name == kInputNames[i]);
}

TEST_CASE("evaluate favours the expected modes") {
  const auto cfg = default_rulebase();
  CHECK(strictly_highest(evaluate(cfg, {30, 90, 85, 10}), Mode::EV));
  CHECK(strictly_highest(evaluate(cfg, {120, 25, 15, 30}), Mode::Series));

  phev::battery::CellParams cp;
  phev::battery::PackConfig pc;
  const auto st = phev::battery::BatteryState::rested(cp, 50.0, 25.0);
  const double pmax = phev::battery::max_discharge_power(st, cp, pc);
  const double above = std::min(1.1 * pmax, cfg.variables[3].max);
  CHECK(strictly_highest(evaluate(cfg, {80, 50, 40, above}), Mode::Parallel));
}

TEST_CASE("argmax tie order") {
  CHECK(argmax({0.5, 0.5, 0.2, 0.1}) == Mode::EV);
  CHECK(argmax({0.1, 0.4, 0.4, 0.4}) == Mode::Series);
  CHECK(argmax({0.0, 0.0, 0.3, 0.3}) == Mode::Parallel);
  CHECK(argmax({0.0, 0.0, 0.0, 0.0}) == Mode::EV);
}

TEST_CASE("decide applies dwell, hysteresis and the regen override") {
  const auto cfg = default_rulebase();
  const Inputs cruise{50, 60, 50, 20};
  CHECK(decide({0.9, 0.3, 0.2, 0.1}, std::nullopt, 0.0, cfg, cruise) == Mode::EV);
  CHECK(decide({0.9, 0.3, 0.2, 0.1}, Mode::Series, 10.0, cfg, cruise) == Mode::EV);
  CHECK(decide({0.7, 0.7, 0.0, 0.0}, std::nullopt, 0.0, cfg, cruise) == Mode::EV);
  // Within the dwell time the previous mode holds.
  CHECK(decide({0.9, 0.1, 0.0, 0.0}, Mode::Series, 1.0, cfg, cruise) == Mode::Series);
  // A challenger must beat the incumbent by the hysteresis margin.
  CHECK(decide({0.53, 0.50, 0.0, 0.0}, Mode::Series, 10.0, cfg, cruise) == Mode::Series);
  CHECK(decide({0.56, 0.50, 0.0, 0.0}, Mode::Series, 10.0, cfg, cruise) == Mode::EV);

  const Inputs braking{50, 60, 50, -15};
  CHECK(decide({0.0, 0.9, 0.9, 0.9}, Mode::Parallel, 10.0, cfg, braking) == Mode::EV);
  CHECK(decide({0.0, 0.9, 0.9, 0.9}, std::nullopt, 0.0, cfg, braking) == Mode::EV);
}

TEST_CASE("supervisor tracks time in mode") {
  const auto cfg = default_rulebase();
  Supervisor sup(cfg);
  CHECK_FALSE(sup.mode().has_value());
  CHECK(sup.step({30, 90, 85, 10}, 0.0) == Mode::EV);
  CHECK(sup.step({120, 25, 15, 30}, 1.0) == Mode::EV);  // dwell not yet served
  CHECK(sup.step({120, 25, 15, 30}, 3.0) == Mode::Series);
}

TEST_CASE("rule base JSON round trip and file pin") {
  const auto cfg = default_rulebase();
  nlohmann::json j = cfg;
  const auto back = j.get<ControllerConfig>();
  CHECK(nlohmann::json(back) == j);

  std::ifstream in(std::string(PHEV_DATA_DIR) + "/rulebase.json");
  REQUIRE(in);
  CHECK(nlohmann::json::parse(in) == j);
  CHECK(nlohmann::json(load_rulebase(std::string(PHEV_DATA_DIR) + "/rulebase.json")) == j);
}

TEST_CASE("rule base validation catches mistakes") {
  auto cfg = default_rulebase();
  cfg.rules.pop_back();
  CHECK_THROWS_AS(cfg.validate(), phev::ConfigError);
  cfg = default_rulebase();
  cfg.rules[0].antecedents[0].term = "warp";
  CHECK_THROWS_AS(cfg.validate(), phev::ConfigError);
  cfg = default_rulebase();
  cfg.rules[0].weight = 0.0;
  CHECK_THROWS_AS(cfg.validate(), phev::ConfigError);
}
