#include <doctest.h>

#include <vector>

#include "phev/engine.hpp"

using namespace phev::engine;

namespace {
EngineMap flat_map(double bsfc) {
  EngineMap m;
  m.table = {{0.0, bsfc}, {1.0, bsfc}};
  return m;
}
}  // namespace

TEST_CASE("bsfc surface") {
  EngineMap m;
  CHECK(bsfc_at(m, m.u_opt * m.max_power) == doctest::Approx(m.bsfc_min));
  CHECK(bsfc_at(m, 0.1 * m.max_power) > m.bsfc_min);
  CHECK(bsfc_at(m, m.max_power) > m.bsfc_min);
  const double d = 0.1;
  CHECK(bsfc_at(m, (m.u_opt - d) * m.max_power) ==
        doctest::Approx(m.bsfc_min * (1.0 + m.c_lo * d * d)));
  try {
    (void)bsfc_at(m, 1.1 * m.max_power);
    FAIL("no throw");
  } catch (const EngineError& e) {
    CHECK(e.kind() == EngineErrorKind::PowerOutOfRange);
  }
}

TEST_CASE("tabulated curve interpolates") {
  EngineMap m;
  m.table = {{0.0, 400.0}, {0.5, 200.0}, {1.0, 300.0}};
  CHECK(bsfc_at(m, 0.25 * m.max_power) == doctest::Approx(300.0));
  CHECK(bsfc_at(m, 0.75 * m.max_power) == doctest::Approx(250.0));
}

TEST_CASE("thermal efficiency") {
  FuelProperties fp;
  fp.lower_heating_value = 44000.0;
  CHECK(efficiency(240.0, fp) == doctest::Approx(0.3409).epsilon(1e-4 / 0.34));
  CHECK(efficiency(3.6e6 / 44000.0, fp) == doctest::Approx(1.0));
}

TEST_CASE("fuel rate") {
  CHECK(fuel_rate(0.0, EngineMap{}) == 0.0);
  CHECK(fuel_rate(30.0, flat_map(240.0)) == doctest::Approx(2.0));
}

TEST_CASE("integrated fuel volume") {
  FuelProperties fp;
  fp.density = 0.75;
  const auto m = flat_map(250.0);
  std::vector<PowerStep> idle(10, {0.0, 1.0});
  CHECK(integrate_fuel(idle, m, fp) == 0.0);
  std::vector<PowerStep> hour(3600, {50.0, 1.0});
  CHECK(integrate_fuel(hour, m, fp) == doctest::Approx(16.67).epsilon(0.01 / 16.67));
}

TEST_CASE("emission rates") {
  EngineMap m;
  FuelProperties fp;
  EmissionMap em;
  em.nox = {10.0, 0.0, 0.0};
  CHECK(emission_rate(50.0, Species::NOx, m, em, fp) == doctest::Approx(10.0 * 50.0 / 3600.0));
  CHECK(emission_rate(0.0, Species::NOx, m, em, fp) == 0.0);
  // CO2 follows fuel through the carbon balance.
  CHECK(emission_rate(40.0, Species::CO2, m, em, fp) ==
        doctest::Approx(fuel_rate(40.0, m) * fp.co2_per_gram_fuel));
  // Cold start raises the rate, fading out after warm-up.
  CHECK(emission_rate(50.0, Species::NOx, m, em, fp, 0.0) ==
        doctest::Approx(em.cold_multiplier * 10.0 * 50.0 / 3600.0));
  CHECK(emission_rate(50.0, Species::NOx, m, em, fp, em.warmup_time) ==
        doctest::Approx(10.0 * 50.0 / 3600.0));
}

TEST_CASE("series set point") {
  EngineMap m;
  CHECK(best_bsfc_power(m, m.optimal_power()).power_kw == doctest::Approx(m.optimal_power()));
  CHECK(best_bsfc_power(m, 0.05 * m.max_power).power_kw ==
        doctest::Approx(m.min_load_fraction * m.max_power));
  CHECK(best_bsfc_power(m, m.max_power).power_kw == doctest::Approx(m.max_power));

  const auto up = best_bsfc_power(m, 30.0, {5.0, 0.0});
  CHECK(up.snapped);
  CHECK(up.power_kw == doctest::Approx(35.0));
  const auto down = best_bsfc_power(m, 80.0, {0.0, 100.0});
  CHECK(down.power_kw == doctest::Approx(m.optimal_power()));
}

TEST_CASE("map validation") {
  EngineMap m;
  m.u_opt = 1.5;
  CHECK_THROWS(m.validate());
  EngineMap t;
  t.table = {{0.5, 200.0}, {0.2, 250.0}};
  CHECK_THROWS(t.validate());
}
