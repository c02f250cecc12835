#pragma once

#include <array>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phev/error.hpp"

namespace phev::engine {

enum class EngineErrorKind { PowerOutOfRange };
using EngineError = KindedError<EngineErrorKind>;

/// Load-based brake-specific fuel consumption surface,
///   bsfc(u) = bsfc_min * (1 + c_lo (u_opt - u)^2 [u < u_opt] + c_hi (u - u_opt)^2 [u > u_opt])
/// with u = P / max_power. A tabulated `u,bsfc` curve replaces the analytic
/// form when present.
struct EngineMap {
  double max_power = 99.0;       // kW
  double displacement = 2360.0;  // cc
  double bsfc_min = 205.0;       // g/kWh
  double u_opt = 0.42;
  double c_lo = 4.0;
  double c_hi = 1.5;
  double min_load_fraction = 0.25;  // series-mode floor
  std::vector<std::pair<double, double>> table;  // (u, g/kWh), sorted by u

  void validate() const;
  /// Surface value at normalized load u (clamped to [0, 1]).
  [[nodiscard]] double bsfc_of_load(double u) const;
  [[nodiscard]] double optimal_power() const noexcept { return u_opt * max_power; }
};

struct FuelProperties {
  double lower_heating_value = 43000.0;  // J/g
  double density = 0.745;                // kg/L
  double co2_per_gram_fuel = 3.17;       // g/g

  void validate() const;
  /// kWh of fuel energy per liter.
  [[nodiscard]] double kwh_per_liter() const noexcept {
    return lower_heating_value * density * 1000.0 / 3.6e6;
  }
};

enum class Species { CO2, CO, HC, NOx };
inline constexpr std::array<Species, 4> kAllSpecies = {Species::CO2, Species::CO, Species::HC,
                                                       Species::NOx};
std::string to_string(Species s);

/// Specific emission surface SE(u) = base * (1 + low * (1 - u)^2 + high * u^2)
/// in g/kWh for one pollutant.
struct SpeciesSurface {
  double base = 0.0;
  double low_load = 0.0;
  double high_load = 0.0;
};

/// Per-species specific emissions. CO2 follows the fuel surface through the
/// carbon balance, so it has no independent surface. The other species carry
/// a cold-start excess that decays linearly over the first `warmup_time`
/// seconds of cumulative engine-on time.
struct EmissionMap {
  SpeciesSurface co{0.9, 0.8, 2.5};
  SpeciesSurface hc{0.12, 1.5, 0.4};
  SpeciesSurface nox{0.25, 0.2, 1.8};
  double cold_multiplier = 2.5;
  double warmup_time = 120.0;  // s
  double scale = 1.0;          // uniform scaling of CO/HC/NOx surfaces

  void validate() const;
  [[nodiscard]] double cold_factor(double engine_on_time) const noexcept;
};

/// Specific fuel consumption (g/kWh) at brake power P (kW), 0 < P <= max.
double bsfc_at(const EngineMap& map, double power_kw);
/// Brake thermal efficiency implied by a BSFC value.
double efficiency(double bsfc, const FuelProperties& fp);
/// Fuel mass flow (g/s); zero when the engine is off.
double fuel_rate(double power_kw, const EngineMap& map);

struct PowerStep {
  double power_kw = 0.0;
  double dt_s = 0.0;
};
/// Liters of fuel burned over a power trace.
double integrate_fuel(std::span<const PowerStep> trace, const EngineMap& map,
                      const FuelProperties& fp);

/// Specific emission (g/kWh) of a species at brake power P.
double specific_emission(double power_kw, Species species, const EngineMap& map,
                         const EmissionMap& emap, const FuelProperties& fp,
                         double engine_on_time = std::numeric_limits<double>::infinity());
/// Emission mass flow (g/s); zero when the engine is off.
double emission_rate(double power_kw, Species species, const EngineMap& map,
                     const EmissionMap& emap, const FuelProperties& fp,
                     double engine_on_time = std::numeric_limits<double>::infinity());

struct BufferHeadroom {
  double charge_kw = 0.0;     // how far the set point may rise above the request
  double discharge_kw = 0.0;  // how far it may fall below
};

struct LoadPoint {
  double power_kw = 0.0;
  bool snapped = false;  // moved toward the optimum on battery buffering
};

/// Series-mode set point: the request clamped to [floor, max], then moved
/// toward the best-BSFC power by as much as the battery can buffer.
LoadPoint best_bsfc_power(const EngineMap& map, double request_kw, BufferHeadroom buffer = {});

/// Loads a tabulated `u,bsfc` CSV into map.table.
void load_bsfc_table(EngineMap& map, const std::string& path);

}  // namespace phev::engine
