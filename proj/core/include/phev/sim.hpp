#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phev/battery.hpp"
#include "phev/controller.hpp"
#include "phev/cycle.hpp"
#include "phev/drivetrain.hpp"
#include "phev/dynamics.hpp"
#include "phev/engine.hpp"
#include "phev/predictor.hpp"

namespace phev::sim {

using drivetrain::Mode;

/// Every component model of the vehicle. Battery parameters describe a new
/// pack; ageing is applied per scenario.
struct Models {
  dynamics::VehicleParams vehicle;
  dynamics::Environment environment;
  engine::EngineMap engine;
  engine::FuelProperties fuel;
  engine::EmissionMap emissions;
  battery::CellParams cell;
  battery::PackConfig pack;
  drivetrain::DrivetrainParams drivetrain;
  controller::ControllerConfig controller = controller::default_rulebase();
  std::shared_ptr<const predictor::RegressionModel> soc_model;  // null: physics estimate
  double predictor_horizon = 300.0;  // s

  void validate() const;
};

struct ScenarioConfig {
  Models models;
  cycle::DrivingCycle cycle;
  double init_soc = 90.0;  // %
  double soh = 100.0;      // %
  std::optional<double> ambient = std::nullopt;  // degC; environment default when unset
  double dt = 1.0;                // s
  std::optional<Mode> forced_mode = std::nullopt;
  std::uint64_t seed = 1;
  bool record_trace = true;

  void validate() const;
};

inline constexpr std::size_t kSpeciesCount = 4;

/// State at the end of one step together with the flows during it.
struct StepRecord {
  double t = 0.0;          // s, end of step
  double v = 0.0;          // km/h, end of step
  double p_demand = 0.0;   // kW
  Mode mode = Mode::EV;
  double p_engine = 0.0;   // kW shaft
  double p_motor_elec = 0.0;
  double p_gen_elec = 0.0;
  double p_batt = 0.0;     // kW at terminals, discharge-positive
  double p_friction = 0.0;
  double p_shortfall = 0.0;
  double soc = 0.0;        // %
  double soc_pred = 0.0;   // % fed to the controller
  double fuel_cum = 0.0;   // g
  std::array<double, kSpeciesCount> emissions_cum{};  // g, CO2 CO HC NOx
  double batt_temp = 0.0;  // degC
  double pack_voltage = 0.0;
  double pack_current = 0.0;
  bool saturated = false;
};

/// Integrated energy flows (kWh) over a run.
struct EnergyLedger {
  double fuel_chemical = 0.0;
  double battery_chemical = 0.0;   // net coulombic energy drawn
  double battery_terminal = 0.0;   // net terminal energy delivered
  double wheel_delivered = 0.0;    // net, regeneration counts negative
  double friction_brake = 0.0;
  double aux = 0.0;
  double engine_loss = 0.0;
  double driveline_loss = 0.0;
  double generator_loss = 0.0;
  double motor_loss = 0.0;
  double battery_heat = 0.0;  // irreversible
  double gross_sources = 0.0;      // fuel plus |battery| step by step

  [[nodiscard]] double residual() const noexcept;
  /// |residual| / gross_sources (0 when nothing flowed).
  [[nodiscard]] double relative_residual() const noexcept;
};

struct Summary {
  std::string cycle;
  double distance = 0.0;      // km
  double duration = 0.0;      // s
  double fc_gasoline = 0.0;   // L/100km
  double fc_elect = 0.0;      // L/100km gasoline equivalent
  double fc_total = 0.0;      // L/100km
  double fuel_liters = 0.0;
  double battery_kwh = 0.0;   // net at terminals
  double init_soc = 0.0;
  double final_soc = 0.0;
  double delta_soc = 0.0;     // init - final, positive when discharged
  double soh = 100.0;
  std::array<double, kSpeciesCount> emissions_g_per_km{};
  std::array<double, kSpeciesCount> emissions_g{};
  double energy_split_ice = 0.0;      // %
  double energy_split_battery = 0.0;  // %
  double ev_time_fraction = 0.0;
  std::array<double, drivetrain::kModeCount> mode_time{};  // s per mode
  int mode_switches = 0;
  double engine_on_time = 0.0;  // s
  int saturated_steps = 0;
  double shortfall_kwh = 0.0;
  double max_bus_error = 0.0;    // kW
  double max_wheel_error = 0.0;  // kW
  double final_temp = 0.0;
  EnergyLedger ledger;
};

struct RunResult {
  std::vector<StepRecord> trace;
  Summary summary;
};

/// Gasoline-equivalent liters of an electrical energy (kWh).
double gasoline_equivalent_liters(double kwh, const engine::FuelProperties& fp);

RunResult run(const ScenarioConfig& sc);

/// Distance (km) at which a sampled (distance, soc) trajectory first reaches
/// `floor`, interpolating linearly inside the crossing step. Returns nullopt
/// when it never does.
std::optional<double> distance_at_soc_floor(std::span<const double> distance_km,
                                            std::span<const double> soc, double floor);

/// Forced-EV distance from init_soc down to the pack's soc_floor, repeating
/// the cycle as often as needed.
double ev_range(const ScenarioConfig& sc, int max_repeats = 1000);

/// SOC consumed (%) by a forced-EV run over `window` from `reference_soc`.
double ev_soc_consumption(const cycle::DrivingCycle& window, const Models& models,
                          double reference_soc = 90.0);

/// Runs scenarios concurrently; results follow input order.
std::vector<Summary> sweep(const std::vector<ScenarioConfig>& scenarios);
std::vector<Summary> sweep_constant_speed(std::span<const double> speeds_kmh, const ScenarioConfig& base,
                                          double duration = 600.0);
std::vector<Summary> sweep_init_soc(std::span<const double> socs, const ScenarioConfig& base);
std::vector<Summary> sweep_soh(std::span<const double> sohs, const ScenarioConfig& base);

void write_trace_csv(std::ostream& out, std::span<const StepRecord> trace);
void to_json(nlohmann::json& j, const Summary& s);
void to_json(nlohmann::json& j, const EnergyLedger& l);

}  // namespace phev::sim
