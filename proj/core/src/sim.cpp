#include "phev/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <ostream>

#include "numfmt.hpp"

namespace phev::sim {

namespace {

using battery::BatteryState;
using cycle::Sample;

// Efficiency assumed by the physics lookahead estimate when no trained model is loaded.
constexpr double kEstimateDriveEff = 0.85;
constexpr double kEstimateRegenEff = 0.60;

double kwh(double kw, double dt) { return kw * dt / 3600.0; }

class Runner {
 public:
  Runner(const ScenarioConfig& sc)
      : m_(sc.models),
        forced_(sc.forced_mode),
        ambient_(sc.ambient.value_or(sc.models.environment.ambient_temp)),
        supervisor_(sc.models.controller) {
    std::tie(cell_, pack_) = battery::apply_soh(sc.models.cell, sc.models.pack, sc.soh);
    state_ = BatteryState::rested(cell_, sc.init_soc, ambient_);
    summary_.init_soc = sc.init_soc;
    summary_.soh = sc.soh;
    summary_.cycle = sc.cycle.name();
    pack_kwh_ = pack_.q_effective(cell_) * pack_.n_series * cell_.ocv_at(50.0) / 3.6e6;
  }

  using Observer = std::function<bool(const StepRecord&, double distance_km)>;

  /// Steps through every interval of `c` (already on the simulation grid);
  /// stops early when the observer returns false.
  bool drive(const cycle::DrivingCycle& c, double t_offset, std::vector<StepRecord>* trace,
             const Observer& observer) {
    const auto s = c.samples();
    const auto ahead = static_cast<std::size_t>(
        std::max<long long>(1, std::llround(m_.predictor_horizon / std::max(c.dt_nominal(), 1e-9))));
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const std::size_t last = std::min(s.size() - 1, i + ahead);
      const StepRecord rec = step(s[i], s[i + 1], s.subspan(i, last - i + 1), t_offset);
      if (trace != nullptr) trace->push_back(rec);
      if (observer && !observer(rec, distance_)) return false;
    }
    return true;
  }

  Summary finish() {
    Summary& s = summary_;
    s.distance = distance_;
    s.final_soc = state_.soc;
    s.delta_soc = s.init_soc - s.final_soc;
    s.final_temp = state_.temp;
    s.fuel_liters = fuel_g_ / (1000.0 * m_.fuel.density);
    s.battery_kwh = ledger_.battery_terminal;
    s.engine_on_time = engine_on_;
    const double liters_elec = gasoline_equivalent_liters(s.battery_kwh, m_.fuel);
    if (distance_ > 0.0) {
      s.fc_gasoline = s.fuel_liters / distance_ * 100.0;
      s.fc_elect = liters_elec / distance_ * 100.0;
      for (std::size_t k = 0; k < kSpeciesCount; ++k) s.emissions_g_per_km[k] = emissions_[k] / distance_;
    }
    s.fc_total = s.fc_gasoline + s.fc_elect;
    s.emissions_g = emissions_;
    const double denom = s.fc_gasoline + std::max(s.fc_elect, 0.0);
    s.energy_split_ice = denom > 0.0 ? 100.0 * s.fc_gasoline / denom : 0.0;
    s.energy_split_battery = 100.0 - s.energy_split_ice;
    s.ev_time_fraction = s.duration > 0.0 ? s.mode_time[static_cast<int>(Mode::EV)] / s.duration : 0.0;
    s.ledger = ledger_;
    return s;
  }

  [[nodiscard]] double soc() const noexcept { return state_.soc; }
  [[nodiscard]] double distance() const noexcept { return distance_; }
  [[nodiscard]] double elapsed() const noexcept { return summary_.duration; }

 private:
  double predicted_consumption(std::span<const Sample> look) const {
    if (look.size() < 2 || look.back().t - look.front().t < predictor::kMinWindow) return 0.0;
    // The model is fitted on a new pack; an aged pack loses more percent for the same energy.
    if (m_.soc_model) {
      return predictor::predict(*m_.soc_model, predictor::extract_features(look)) * 100.0 / pack_.soh;
    }
    double e = 0.0;
    for (std::size_t i = 0; i + 1 < look.size(); ++i) {
      const double dt = look[i + 1].t - look[i].t;
      const double v = 0.5 * (look[i].v + look[i + 1].v) / 3.6;
      const double a = (look[i + 1].v - look[i].v) / 3.6 / dt;
      const double g = 0.5 * (look[i].grade + look[i + 1].grade);
      const double p = dynamics::power_demand(m_.vehicle, m_.environment, v, a, g);
      e += kwh(p > 0.0 ? p / kEstimateDriveEff : p * kEstimateRegenEff, dt);
      e += kwh(m_.drivetrain.aux_power, dt);
    }
    return 100.0 * e / pack_kwh_;
  }

  StepRecord step(const Sample& a, const Sample& b, std::span<const Sample> look, double t_offset) {
    const double dt = b.t - a.t;
    const double v_mean = 0.5 * (a.v + b.v) / 3.6;
    const double accel = (b.v - a.v) / 3.6 / dt;
    const double grade = 0.5 * (a.grade + b.grade);
    const double pd = dynamics::power_demand(m_.vehicle, m_.environment, v_mean, accel, grade);
    const double t_start = t_offset + a.t;

    StepRecord rec;
    rec.soc_pred = state_.soc;
    Mode mode;
    if (forced_) {
      mode = *forced_;
    } else {
      rec.soc_pred = std::clamp(state_.soc - predicted_consumption(look), 0.0, 100.0);
      const controller::Inputs in{v_mean * 3.6, state_.soc, rec.soc_pred, pd};
      mode = supervisor_.step(in, t_start);
    }
    if (last_mode_ && *last_mode_ != mode) ++summary_.mode_switches;
    last_mode_ = mode;

    drivetrain::SplitInputs si;
    si.p_demand = pd;
    si.speed_ms = v_mean;
    si.soc = state_.soc;
    si.batt_max_discharge = battery::max_discharge_power(state_, cell_, pack_);
    si.batt_max_charge = battery::max_charge_power(state_, cell_, pack_, dt);
    const auto split = drivetrain::execute_mode(mode, si, m_.drivetrain, m_.engine);

    bool saturated = split.saturated;
    double current = 0.0;
    try {
      current = battery::solve_current(state_, split.p_batt, cell_, pack_);
    } catch (const battery::BatteryError&) {
      current = pack_.max_discharge_current(cell_);
      saturated = true;
    }
    const double i_dis = pack_.max_discharge_current(cell_);
    const double i_chg = pack_.max_charge_current(cell_);
    if (current > i_dis || current < -i_chg) {
      current = std::clamp(current, -i_chg, i_dis);
      saturated = true;
    }
    const double soc_before = state_.soc;
    const auto res = battery::step(state_, current, dt, cell_, pack_, ambient_);
    state_ = res.state;
    const double p_term = res.voltage * current / 1000.0;

    // Engine accounting.
    const double p_eng = std::min(split.p_engine_mech, m_.engine.max_power);
    const double fuel_step = engine::fuel_rate(p_eng, m_.engine) * dt;
    fuel_g_ += fuel_step;
    for (std::size_t k = 0; k < kSpeciesCount; ++k) {
      emissions_[k] += engine::emission_rate(p_eng, engine::kAllSpecies[k], m_.engine, m_.emissions,
                                             m_.fuel, engine_on_) * dt;
    }
    if (p_eng > 0.0) engine_on_ += dt;

    // Energy ledger.
    const double fuel_kwh = fuel_step * m_.fuel.lower_heating_value / 3.6e6;
    const double batt_chem = pack_.n_series * res.ocv_cell * (soc_before - state_.soc) / 100.0 *
                             pack_.q_effective(cell_) / 3.6e6;
    auto& L = ledger_;
    L.fuel_chemical += fuel_kwh;
    L.battery_chemical += batt_chem;
    L.battery_terminal += kwh(p_term, dt);
    L.wheel_delivered += kwh(split.wheel_delivered(), dt);
    L.friction_brake += kwh(split.p_friction_brake, dt);
    L.aux += kwh(split.p_aux, dt);
    L.engine_loss += fuel_kwh - kwh(p_eng, dt);
    L.driveline_loss += kwh(split.driveline_loss, dt);
    L.generator_loss += kwh(split.generator_loss, dt);
    L.motor_loss += kwh(split.motor_loss, dt);
    L.battery_heat += res.heat.irreversible() * pack_.n_series * pack_.n_parallel * dt / 3.6e6;
    L.gross_sources += fuel_kwh + std::abs(batt_chem);

    const double bus_err = std::abs(split.p_batt + split.p_gen_elec - split.p_motor_elec - split.p_aux);
    const double wheel_err =
        std::abs(split.wheel_delivered() - split.p_friction_brake + split.p_shortfall - pd);
    summary_.max_bus_error = std::max(summary_.max_bus_error, bus_err);
    summary_.max_wheel_error = std::max(summary_.max_wheel_error, wheel_err);
    summary_.mode_time[static_cast<int>(mode)] += dt;
    summary_.duration += dt;
    summary_.shortfall_kwh += kwh(split.p_shortfall, dt);
    if (saturated) ++summary_.saturated_steps;
    distance_ += v_mean * dt / 1000.0;

    rec.t = t_offset + b.t;
    rec.v = b.v;
    rec.p_demand = pd;
    rec.mode = mode;
    rec.p_engine = p_eng;
    rec.p_motor_elec = split.p_motor_elec;
    rec.p_gen_elec = split.p_gen_elec;
    rec.p_batt = p_term;
    rec.p_friction = split.p_friction_brake;
    rec.p_shortfall = split.p_shortfall;
    rec.soc = state_.soc;
    rec.fuel_cum = fuel_g_;
    rec.emissions_cum = emissions_;
    rec.batt_temp = state_.temp;
    rec.pack_voltage = res.voltage;
    rec.pack_current = current;
    rec.saturated = saturated;
    return rec;
  }

  const Models& m_;
  std::optional<Mode> forced_;
  double ambient_;
  controller::Supervisor supervisor_;
  battery::CellParams cell_;
  battery::PackConfig pack_;
  BatteryState state_;
  double pack_kwh_ = 1.0;
  double fuel_g_ = 0.0;
  std::array<double, kSpeciesCount> emissions_{};
  double engine_on_ = 0.0;
  double distance_ = 0.0;
  std::optional<Mode> last_mode_;
  EnergyLedger ledger_;
  Summary summary_;
};

cycle::DrivingCycle on_grid(const ScenarioConfig& sc) { return cycle::resample(sc.cycle, sc.dt); }

}  // namespace

void Models::validate() const {
  vehicle.validate();
  environment.validate();
  engine.validate();
  fuel.validate();
  emissions.validate();
  cell.validate();
  pack.validate();
  drivetrain.validate();
  controller.validate();
  if (!(predictor_horizon >= predictor::kMinWindow)) throw ConfigError("predictor horizon must be >= 10 s");
}

void ScenarioConfig::validate() const {
  models.validate();
  if (!(dt > 0.0)) throw ConfigError("scenario.dt must be positive");
  if (!(soh > 0.0 && soh <= 100.0)) throw ConfigError("scenario.soh must lie in (0, 100]");
  if (!(init_soc >= models.pack.soc_floor && init_soc <= models.pack.soc_ceiling)) {
    throw ConfigError("scenario.init_soc must lie in the usable window [" +
                      detail::format_double(models.pack.soc_floor) + ", " +
                      detail::format_double(models.pack.soc_ceiling) + "]");
  }
}

double EnergyLedger::residual() const noexcept {
  const double sources = fuel_chemical + battery_chemical;
  const double sinks = wheel_delivered + aux + engine_loss + driveline_loss + generator_loss +
                       motor_loss + battery_heat;
  return sources - sinks;
}

double EnergyLedger::relative_residual() const noexcept {
  return gross_sources > 0.0 ? std::abs(residual()) / gross_sources : 0.0;
}

double gasoline_equivalent_liters(double kwh_value, const engine::FuelProperties& fp) {
  return kwh_value * 3.6e6 / (fp.lower_heating_value * fp.density * 1000.0);
}

RunResult run(const ScenarioConfig& sc) {
  sc.validate();
  const auto grid = on_grid(sc);
  Runner runner(sc);
  RunResult out;
  if (sc.record_trace) out.trace.reserve(grid.size());
  runner.drive(grid, 0.0, sc.record_trace ? &out.trace : nullptr, {});
  out.summary = runner.finish();
  return out;
}

std::optional<double> distance_at_soc_floor(std::span<const double> distance_km,
                                            std::span<const double> soc, double floor) {
  const std::size_t n = std::min(distance_km.size(), soc.size());
  if (n == 0) return std::nullopt;
  if (soc[0] <= floor) return distance_km[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (soc[i] <= floor) {
      const double w = (soc[i - 1] - floor) / (soc[i - 1] - soc[i]);
      return distance_km[i - 1] + w * (distance_km[i] - distance_km[i - 1]);
    }
  }
  return std::nullopt;
}

double ev_range(const ScenarioConfig& base, int max_repeats) {
  ScenarioConfig sc = base;
  sc.forced_mode = Mode::EV;
  sc.record_trace = false;
  sc.validate();
  const double floor = sc.models.pack.soc_floor;
  if (sc.init_soc <= floor) return 0.0;
  const auto grid = on_grid(sc);
  Runner runner(sc);
  double prev_d = 0.0;
  double prev_soc = sc.init_soc;
  std::optional<double> hit;
  const auto observer = [&](const StepRecord& rec, double d) {
    const std::array<double, 2> ds{prev_d, d};
    const std::array<double, 2> ss{prev_soc, rec.soc};
    hit = distance_at_soc_floor(ds, ss, floor);
    prev_d = d;
    prev_soc = rec.soc;
    return !hit.has_value();
  };
  double t_offset = 0.0;
  for (int r = 0; r < max_repeats; ++r) {
    const double soc_at_start = runner.soc();
    if (!runner.drive(grid, t_offset, nullptr, observer)) return *hit;
    t_offset += grid.duration();
    if (!(runner.soc() < soc_at_start)) break;  // no net consumption: unbounded range
  }
  return std::numeric_limits<double>::infinity();
}

double ev_soc_consumption(const cycle::DrivingCycle& window, const Models& models, double reference_soc) {
  ScenarioConfig sc{models, window};
  sc.init_soc = reference_soc;
  sc.forced_mode = Mode::EV;
  sc.record_trace = false;
  return run(sc).summary.delta_soc;
}

std::vector<Summary> sweep(const std::vector<ScenarioConfig>& scenarios) {
  std::vector<std::future<Summary>> jobs;
  jobs.reserve(scenarios.size());
  for (const auto& sc : scenarios) {
    jobs.push_back(std::async(std::launch::async, [&sc] {
      ScenarioConfig local = sc;
      local.record_trace = false;
      return run(local).summary;
    }));
  }
  std::vector<Summary> out;
  out.reserve(jobs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

std::vector<Summary> sweep_constant_speed(std::span<const double> speeds_kmh, const ScenarioConfig& base,
                                          double duration) {
  std::vector<ScenarioConfig> list;
  for (double v : speeds_kmh) {
    ScenarioConfig sc = base;
    sc.cycle = cycle::constant_speed(v, duration);
    list.push_back(std::move(sc));
  }
  return sweep(list);
}

std::vector<Summary> sweep_init_soc(std::span<const double> socs, const ScenarioConfig& base) {
  std::vector<ScenarioConfig> list;
  for (double s : socs) {
    ScenarioConfig sc = base;
    sc.init_soc = s;
    list.push_back(std::move(sc));
  }
  return sweep(list);
}

std::vector<Summary> sweep_soh(std::span<const double> sohs, const ScenarioConfig& base) {
  std::vector<ScenarioConfig> list;
  for (double s : sohs) {
    ScenarioConfig sc = base;
    sc.soh = s;
    list.push_back(std::move(sc));
  }
  return sweep(list);
}

// ---------------------------------------------------------------------------
// Output

void write_trace_csv(std::ostream& out, std::span<const StepRecord> trace) {
  using detail::format_double;
  out << "t,v,p_demand,mode,p_engine,p_motor_elec,p_gen_elec,p_batt,p_friction,p_shortfall,soc,"
         "soc_pred,fuel_cum,co2_cum,co_cum,hc_cum,nox_cum,batt_temp,pack_voltage,pack_current,saturated\n";
  for (const auto& r : trace) {
    out << format_double(r.t) << ',' << format_double(r.v) << ',' << format_double(r.p_demand) << ','
        << drivetrain::to_string(r.mode) << ',' << format_double(r.p_engine) << ','
        << format_double(r.p_motor_elec) << ',' << format_double(r.p_gen_elec) << ','
        << format_double(r.p_batt) << ',' << format_double(r.p_friction) << ','
        << format_double(r.p_shortfall) << ',' << format_double(r.soc) << ','
        << format_double(r.soc_pred) << ',' << format_double(r.fuel_cum);
    for (double e : r.emissions_cum) out << ',' << format_double(e);
    out << ',' << format_double(r.batt_temp) << ',' << format_double(r.pack_voltage) << ','
        << format_double(r.pack_current) << ',' << (r.saturated ? 1 : 0) << '\n';
  }
}

void to_json(nlohmann::json& j, const EnergyLedger& l) {
  j = {{"fuel_chemical_kwh", l.fuel_chemical},
       {"battery_chemical_kwh", l.battery_chemical},
       {"battery_terminal_kwh", l.battery_terminal},
       {"wheel_delivered_kwh", l.wheel_delivered},
       {"friction_brake_kwh", l.friction_brake},
       {"aux_kwh", l.aux},
       {"engine_loss_kwh", l.engine_loss},
       {"driveline_loss_kwh", l.driveline_loss},
       {"generator_loss_kwh", l.generator_loss},
       {"motor_loss_kwh", l.motor_loss},
       {"battery_heat_kwh", l.battery_heat},
       {"residual_kwh", l.residual()},
       {"relative_residual", l.relative_residual()}};
}

void to_json(nlohmann::json& j, const Summary& s) {
  nlohmann::json em = nlohmann::json::object();
  nlohmann::json em_g = nlohmann::json::object();
  for (std::size_t k = 0; k < kSpeciesCount; ++k) {
    em[engine::to_string(engine::kAllSpecies[k])] = s.emissions_g_per_km[k];
    em_g[engine::to_string(engine::kAllSpecies[k])] = s.emissions_g[k];
  }
  nlohmann::json modes = nlohmann::json::object();
  for (int m = 0; m < drivetrain::kModeCount; ++m) {
    modes[drivetrain::to_string(static_cast<Mode>(m))] = s.mode_time[m];
  }
  j = {{"cycle", s.cycle},
       {"distance_km", s.distance},
       {"duration_s", s.duration},
       {"fc_gasoline", s.fc_gasoline},
       {"fc_elect", s.fc_elect},
       {"fc_total", s.fc_total},
       {"fuel_liters", s.fuel_liters},
       {"battery_kwh", s.battery_kwh},
       {"init_soc", s.init_soc},
       {"final_soc", s.final_soc},
       {"delta_soc", s.delta_soc},
       {"soh", s.soh},
       {"emissions_g_per_km", em},
       {"emissions_g", em_g},
       {"energy_split", {{"ice", s.energy_split_ice}, {"battery", s.energy_split_battery}}},
       {"ev_time_fraction", s.ev_time_fraction},
       {"mode_time_s", modes},
       {"mode_switches", s.mode_switches},
       {"engine_on_time_s", s.engine_on_time},
       {"saturated_steps", s.saturated_steps},
       {"shortfall_kwh", s.shortfall_kwh},
       {"max_bus_error_kw", s.max_bus_error},
       {"max_wheel_error_kw", s.max_wheel_error},
       {"final_temp", s.final_temp},
       {"energy_ledger", s.ledger}};
}

}  // namespace phev::sim
