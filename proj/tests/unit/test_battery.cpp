#include <doctest.h>

#include <cmath>

#include "phev/battery.hpp"

using namespace phev::battery;

namespace {

// One bare cell: flat OCV, pure series resistance, no dynamics.
std::pair<CellParams, PackConfig> bare_cell(double ocv, double r) {
  CellParams cp;
  cp.ocv = Curve({{0.0, ocv}, {100.0, ocv}});
  cp.r_ohm = r;
  cp.r_ct = 0.0;
  cp.rc.clear();
  cp.eta_farad = 1.0;
  cp.max_discharge_c = 1e6;
  cp.max_charge_c = 1e6;
  PackConfig pc;
  pc.n_series = 1;
  pc.n_parallel = 1;
  pc.r_add = 0.0;
  return {cp, pc};
}

}  // namespace

TEST_CASE("curve interpolation") {
  const Curve c({{0.0, 3.0}, {50.0, 3.5}, {100.0, 4.0}});
  CHECK(c(25.0) == doctest::Approx(3.25));
  CHECK(c(-5.0) == 3.0);
  CHECK(c(120.0) == 4.0);
  CHECK(c.nondecreasing());
  CHECK(CellParams::default_ocv().nondecreasing());
}

TEST_CASE("coulomb counting") {
  auto [cp, pc] = bare_cell(3.6, 0.1);
  cp.q_rated = 36000.0;
  auto s = BatteryState::rested(cp, 50.0, 25.0);
  CHECK(soc_step(s, 0.0, 10.0, cp, pc).soc == 50.0);
  CHECK(soc_step(s, -10.0, 360.0, cp, pc).soc == doctest::Approx(60.0));

  s.soc = 100.0;
  const double one_c = cp.q_rated / 3600.0;
  const auto empty = soc_step(s, one_c, 3600.0, cp, pc);
  CHECK(empty.soc == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_FALSE(empty.clamped);
  CHECK(soc_step(empty, 1.0, 10.0, cp, pc).clamped);

  cp.eta_farad = 0.9;
  s.soc = 50.0;
  CHECK(soc_step(s, -10.0, 360.0, cp, pc).soc == doctest::Approx(59.0));
}

TEST_CASE("RC branch exact update") {
  CellParams cp;
  cp.rc = {{0.05, 1000.0}};
  auto s = BatteryState::rested(cp, 50.0, 25.0);
  CHECK(rc_step(s, 0.0, 5.0, cp).u_diff[0] == 0.0);
  CHECK(rc_step(s, 50.0, 50.0, cp).u_diff[0] ==
        doctest::Approx(-50.0 * 0.05 * (1.0 - std::exp(-1.0))).epsilon(1e-4 / 1.58));
  CHECK(rc_step(s, 50.0, 1e6, cp).u_diff[0] == doctest::Approx(-2.5));
  // Two half steps equal one full step for constant current.
  const auto half = rc_step(rc_step(s, 20.0, 25.0, cp), 20.0, 25.0, cp);
  CHECK(half.u_diff[0] == doctest::Approx(rc_step(s, 20.0, 50.0, cp).u_diff[0]));
}

TEST_CASE("terminal voltage") {
  auto [cp, pc] = bare_cell(3.6, 0.1);
  const auto s = BatteryState::rested(cp, 50.0, 25.0);
  CHECK(terminal_voltage(s, 0.0, cp, pc) == doctest::Approx(3.6));
  CHECK(terminal_voltage(s, 5.0, cp, pc) == doctest::Approx(3.1));
  CellParams def;
  PackConfig dpc;
  const auto rest = BatteryState::rested(def, 60.0, 25.0);
  CHECK(terminal_voltage(rest, 0.0, def, dpc) == doctest::Approx(dpc.n_series * def.ocv_at(60.0)));
}

TEST_CASE("heat sources") {
  auto [cp, pc] = bare_cell(3.6, 0.1);
  cp.du_dt = 2e-4;
  const auto s = BatteryState::rested(cp, 50.0, 25.0);
  const auto idle = heat_rate(s, 0.0, cp, pc);
  CHECK(idle.total() == 0.0);
  const auto h = heat_rate(s, 50.0, cp, pc);
  CHECK(h.q_ohm == doctest::Approx(250.0));
  CHECK(h.q_entropic == doctest::Approx(-50.0 * 2e-4 * 298.15));
  CHECK(h.q_entropic == doctest::Approx(-2.98).epsilon(0.01 / 2.98));
}

TEST_CASE("lumped thermal node") {
  PackConfig pc;
  pc.thermal = {10000.0, 0.0};
  auto s = BatteryState::rested(CellParams{}, 50.0, 25.0);
  CHECK(thermal_step(s, 0.0, 20.0, pc, 25.0).temp == doctest::Approx(25.0));
  CHECK(thermal_step(s, 500.0, 20.0, pc, 25.0).temp == doctest::Approx(26.0));
  pc.thermal.h_a = 50.0;
  s.temp = 35.0;
  const auto cooled = thermal_step(s, 0.0, 1e5, pc, 25.0);
  CHECK(cooled.temp == doctest::Approx(25.0).epsilon(1e-6));
}

TEST_CASE("state of health") {
  CHECK(soh_capacity(20.0, 20.0) == doctest::Approx(100.0));
  CHECK(soh_capacity(16.0, 20.0) == doctest::Approx(80.0));
  CHECK(soh_resistance(0.1, 0.2, 0.1) == doctest::Approx(100.0));
  CHECK(soh_resistance(0.2, 0.2, 0.1) == doctest::Approx(0.0));
  CHECK(soh_resistance(0.15, 0.2, 0.1) == doctest::Approx(50.0));
  CHECK_THROWS_AS((void)soh_resistance(0.15, 0.1, 0.1), BatteryError);
}

TEST_CASE("ageing") {
  CellParams cp;
  PackConfig pc;
  const auto [c100, p100] = apply_soh(cp, pc, 100.0);
  CHECK(c100.r_ohm == cp.r_ohm);
  CHECK(p100.q_effective(c100) == doctest::Approx(pc.q_effective(cp)));

  const auto [c80, p80] = apply_soh(cp, pc, 80.0);
  CHECK(p80.q_effective(c80) == doctest::Approx(0.8 * pc.q_effective(cp)));
  CHECK(c80.r_ohm == doctest::Approx(1.2 * cp.r_ohm));
  CHECK(c80.r_ct == doctest::Approx(1.2 * cp.r_ct));

  const auto [c50, p50] = apply_soh(cp, pc, 50.0);
  CHECK(c50.r_ohm == doctest::Approx(1.5 * cp.r_ohm));
  CHECK(p50.r_total(c50) == doctest::Approx(1.5 * pc.r_total(cp)));
}

TEST_CASE("terminal current from power") {
  auto [cp, pc] = bare_cell(360.0, 0.1);
  const auto s = BatteryState::rested(cp, 50.0, 25.0);
  CHECK(solve_current(s, 0.0, cp, pc) == 0.0);
  const double i = solve_current(s, 35.0, cp, pc);
  CHECK(i == doctest::Approx(100.0));
  CHECK(terminal_voltage(s, i, cp, pc) == doctest::Approx(350.0));
  // Charging: the current comes out negative and the voltage rises.
  const double ic = solve_current(s, -35.0, cp, pc);
  CHECK(ic < 0.0);
  CHECK(terminal_voltage(s, ic, cp, pc) * ic / 1000.0 == doctest::Approx(-35.0));
  try {
    (void)solve_current(s, 324.5, cp, pc);
    FAIL("no throw");
  } catch (const BatteryError& e) {
    CHECK(e.kind() == BatteryErrorKind::PowerInfeasible);
  }
}

TEST_CASE("power limits") {
  CellParams cp;
  PackConfig pc;
  auto s = BatteryState::rested(cp, 60.0, 25.0);
  const double pmax = max_discharge_power(s, cp, pc);
  CHECK(pmax > 0.0);
  const double i = solve_current(s, pmax, cp, pc);
  CHECK(i <= pc.max_discharge_current(cp) * (1.0 + 1e-9));
  CHECK(max_charge_power(s, cp, pc) > 0.0);
  s.soc = pc.soc_ceiling;
  CHECK(max_charge_power(s, cp, pc) == 0.0);
}

TEST_CASE("full step conserves charge bookkeeping") {
  CellParams cp;
  PackConfig pc;
  const auto s = BatteryState::rested(cp, 70.0, 25.0);
  const auto r = step(s, 50.0, 1.0, cp, pc, 25.0);
  CHECK(r.state.soc < s.soc);
  CHECK(r.voltage < pc.n_series * cp.ocv_at(70.0));
  CHECK(r.state.throughput_ah == doctest::Approx(50.0 / 3600.0));
  CHECK(r.state.temp > 25.0);
}
