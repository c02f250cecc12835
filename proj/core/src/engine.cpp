#include "phev/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace phev::engine {
namespace {

constexpr double kEnvelopeTolerance = 1e-9;

void check_envelope(const EngineMap& map, double power_kw, bool allow_zero) {
  const bool low_ok = allow_zero ? power_kw >= 0.0 : power_kw > 0.0;
  if (!low_ok || power_kw > map.max_power * (1.0 + kEnvelopeTolerance) || !std::isfinite(power_kw)) {
    throw EngineError(EngineErrorKind::PowerOutOfRange,
                      "engine power " + std::to_string(power_kw) + " kW outside (0, " +
                          std::to_string(map.max_power) + "]");
  }
}

double surface(const SpeciesSurface& s, double u) {
  return s.base * (1.0 + s.low_load * (1.0 - u) * (1.0 - u) + s.high_load * u * u);
}

}  // namespace

void EngineMap::validate() const {
  if (!(max_power > 0.0)) throw ConfigError("engine.max_power must be positive");
  if (!(bsfc_min > 0.0)) throw ConfigError("engine.bsfc_min must be positive");
  if (!(u_opt > 0.0 && u_opt < 1.0)) throw ConfigError("engine.u_opt must lie in (0, 1)");
  if (c_lo < 0.0 || c_hi < 0.0) throw ConfigError("engine curvature constants must be >= 0");
  if (!(min_load_fraction >= 0.0 && min_load_fraction <= 1.0)) {
    throw ConfigError("engine.min_load_fraction must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!(table[i].second > 0.0)) throw ConfigError("tabulated bsfc must be positive");
    if (i > 0 && !(table[i].first > table[i - 1].first)) {
      throw ConfigError("tabulated bsfc loads must strictly increase");
    }
  }
}

double EngineMap::bsfc_of_load(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  if (!table.empty()) {
    if (u <= table.front().first) return table.front().second;
    if (u >= table.back().first) return table.back().second;
    const auto hi = std::lower_bound(table.begin(), table.end(), u,
                                     [](const auto& p, double x) { return p.first < x; });
    const auto lo = hi - 1;
    const double w = (u - lo->first) / (hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
  }
  const double d = u - u_opt;
  const double c = d < 0.0 ? c_lo : c_hi;
  return bsfc_min * (1.0 + c * d * d);
}

void FuelProperties::validate() const {
  if (!(lower_heating_value > 0.0 && density > 0.0 && co2_per_gram_fuel > 0.0)) {
    throw ConfigError("fuel properties must be positive");
  }
}

std::string to_string(Species s) {
  switch (s) {
    case Species::CO2: return "CO2";
    case Species::CO: return "CO";
    case Species::HC: return "HC";
    case Species::NOx: return "NOx";
  }
  return "?";
}

void EmissionMap::validate() const {
  for (const auto* s : {&co, &hc, &nox}) {
    if (s->base < 0.0 || s->low_load < 0.0 || s->high_load < 0.0) {
      throw ConfigError("emission surface coefficients must be >= 0");
    }
  }
  if (cold_multiplier < 1.0) throw ConfigError("emissions.cold_multiplier must be >= 1");
  if (warmup_time < 0.0) throw ConfigError("emissions.warmup_time must be >= 0");
  if (scale < 0.0) throw ConfigError("emissions.scale must be >= 0");
}

double EmissionMap::cold_factor(double engine_on_time) const noexcept {
  if (warmup_time <= 0.0 || engine_on_time >= warmup_time) return 1.0;
  return 1.0 + (cold_multiplier - 1.0) * (1.0 - std::max(engine_on_time, 0.0) / warmup_time);
}

double bsfc_at(const EngineMap& map, double power_kw) {
  check_envelope(map, power_kw, false);
  return map.bsfc_of_load(power_kw / map.max_power);
}

double efficiency(double bsfc, const FuelProperties& fp) {
  return 3.6e6 / (bsfc * fp.lower_heating_value);
}

double fuel_rate(double power_kw, const EngineMap& map) {
  check_envelope(map, power_kw, true);
  if (power_kw == 0.0) return 0.0;
  return bsfc_at(map, power_kw) * power_kw / 3600.0;
}

double integrate_fuel(std::span<const PowerStep> trace, const EngineMap& map,
                      const FuelProperties& fp) {
  double liters = 0.0;
  for (const auto& step : trace) {
    check_envelope(map, step.power_kw, true);
    if (step.power_kw == 0.0) continue;
    liters += step.power_kw * bsfc_at(map, step.power_kw) / (1000.0 * fp.density) * (step.dt_s / 3600.0);
  }
  return liters;
}

double specific_emission(double power_kw, Species species, const EngineMap& map,
                         const EmissionMap& emap, const FuelProperties& fp,
                         double engine_on_time) {
  const double u = std::clamp(power_kw / map.max_power, 0.0, 1.0);
  switch (species) {
    case Species::CO2: return map.bsfc_of_load(u) * fp.co2_per_gram_fuel;
    case Species::CO: return emap.scale * surface(emap.co, u) * emap.cold_factor(engine_on_time);
    case Species::HC: return emap.scale * surface(emap.hc, u) * emap.cold_factor(engine_on_time);
    case Species::NOx: return emap.scale * surface(emap.nox, u) * emap.cold_factor(engine_on_time);
  }
  return 0.0;
}

double emission_rate(double power_kw, Species species, const EngineMap& map,
                     const EmissionMap& emap, const FuelProperties& fp, double engine_on_time) {
  if (!(power_kw > 0.0)) return 0.0;
  return specific_emission(power_kw, species, map, emap, fp, engine_on_time) * power_kw / 3600.0;
}

LoadPoint best_bsfc_power(const EngineMap& map, double request_kw, BufferHeadroom buffer) {
  const double floor = map.min_load_fraction * map.max_power;
  const double clamped = std::clamp(request_kw, floor, map.max_power);
  const double target = map.optimal_power();
  LoadPoint out{clamped, false};
  if (target > clamped && buffer.charge_kw > 0.0) {
    out.power_kw = std::min(target, clamped + buffer.charge_kw);
    out.snapped = true;
  } else if (target < clamped && buffer.discharge_kw > 0.0) {
    out.power_kw = std::max(target, clamped - buffer.discharge_kw);
    out.snapped = true;
  }
  return out;
}

void load_bsfc_table(EngineMap& map, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bsfc table: " + path);
  std::string line;
  bool header = false;
  map.table.clear();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "u,bsfc") throw ConfigError("bsfc table header must be `u,bsfc`: " + path);
      header = true;
      continue;
    }
    std::istringstream row(line);
    double u = 0.0;
    double b = 0.0;
    char comma = 0;
    if (!(row >> u >> comma >> b) || comma != ',') {
      throw ConfigError("malformed bsfc table row in " + path + ": " + line);
    }
    map.table.emplace_back(u, b);
  }
  map.validate();
}

}  // namespace phev::engine
