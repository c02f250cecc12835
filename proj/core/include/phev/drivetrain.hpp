#pragma once

#include <optional>
#include <string>

#include "phev/engine.hpp"
#include "phev/error.hpp"

namespace phev::drivetrain {

enum class Mode { EV = 0, Series = 1, Parallel = 2, ICE = 3 };
inline constexpr int kModeCount = 4;

std::string to_string(Mode m);
std::optional<Mode> mode_from_string(const std::string& s);

enum class DrivetrainErrorKind { MachineOverload };
using DrivetrainError = KindedError<DrivetrainErrorKind>;

/// Electric machine with a parabolic efficiency island,
///   eta(P) = max(eta_min, eta_peak - c (P/max_power - p_opt)^2).
struct MachineParams {
  double max_power = 60.0;    // kW
  double max_torque = 137.0;  // N m (informational; no speed state)
  double rated_power = 30.0;  // kW
  double eta_peak = 0.94;
  double p_opt = 0.4;
  double eta_c = 0.35;
  double eta_min = 0.70;

  void validate() const;
  [[nodiscard]] double efficiency(double power_abs) const;
};

struct DrivetrainParams {
  MachineParams front{60.0, 137.0, 30.0, 0.94, 0.4, 1.0, 0.70};
  MachineParams rear{70.0, 195.0, 35.0, 0.94, 0.4, 1.0, 0.70};
  MachineParams generator{70.0, 0.0, 25.0, 0.95, 0.45, 0.30, 0.75};
  double driveline_efficiency = 0.96;  // engine shaft to wheel
  double aux_power = 0.3;              // kW
  double soc_target = 70.0;            // % charge-sustaining target
  double charge_gain = 1.0;            // kW per % below target
  double max_charge_request = 25.0;    // kW
  double regen_min_speed = 5.0;        // km/h, regen tapers to zero below this
  double regen_fraction = 1.0;         // share of braking power offered to the machines

  void validate() const;
  [[nodiscard]] double motor_max_power() const noexcept { return front.max_power + rear.max_power; }
  /// Charging power requested toward soc_target at the given SOC.
  [[nodiscard]] double charge_request(double soc) const noexcept;
};

/// Electrical terminal power of a machine for a signed shaft power.
double motor_elec_power(double p_mech, const MachineParams& mp);
/// Combined electrical power of both traction machines sharing p_mech in
/// proportion to their ratings.
double traction_elec_power(double p_mech, const DrivetrainParams& dp);

/// Wheel power (kW) that can be recovered by regeneration.
double regen_capacity(double speed_ms, double battery_charge_limit_kw, const MachineParams& front,
                      const MachineParams& rear, double min_speed_kmh = 5.0);

/// Operating context for one step.
struct SplitInputs {
  double p_demand = 0.0;           // wheel power, kW
  double speed_ms = 0.0;
  double soc = 50.0;
  double batt_max_discharge = 0.0;  // kW at terminals
  double batt_max_charge = 0.0;     // kW at terminals, positive
};

struct PowerSplit {
  Mode mode = Mode::EV;
  double p_demand = 0.0;
  double p_engine_mech = 0.0;    // total engine shaft power
  double p_engine_wheel = 0.0;   // engine shaft power routed to the wheels
  double p_engine_gen = 0.0;     // engine shaft power routed to the generator
  double p_gen_elec = 0.0;
  double p_motor_mech = 0.0;     // signed, at the wheel
  double p_motor_elec = 0.0;     // signed, negative feeds the bus
  double p_batt = 0.0;           // signed, discharge-positive
  double p_friction_brake = 0.0;
  double p_aux = 0.0;
  double p_shortfall = 0.0;      // unmet positive demand
  bool saturated = false;
  bool engine_snapped = false;

  double motor_loss = 0.0;
  double generator_loss = 0.0;
  double driveline_loss = 0.0;

  /// Engine contribution at the wheel after driveline losses.
  [[nodiscard]] double engine_at_wheel() const noexcept { return p_engine_wheel - driveline_loss; }
  /// Net mechanical power delivered to the wheel by all sources.
  [[nodiscard]] double wheel_delivered() const noexcept { return p_motor_mech + engine_at_wheel(); }
};

/// Realizes a supervisory mode as a concrete power split. Braking is always
/// served by regeneration up to capacity with friction brakes taking the
/// remainder, and an unmet traction demand is reported through
/// p_shortfall and `saturated` instead of an exception. In Parallel the
/// engine never runs below its best-efficiency point; surplus is banked
/// through the motors when the battery can accept it.
PowerSplit execute_mode(Mode mode, const SplitInputs& in, const DrivetrainParams& dp,
                        const engine::EngineMap& em);

}  // namespace phev::drivetrain
