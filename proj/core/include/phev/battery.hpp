#pragma once

#include <string>
#include <utility>
#include <vector>

#include "phev/error.hpp"

namespace phev::battery {

enum class BatteryErrorKind { CurrentLimit, PowerInfeasible, DegenerateBounds, InvalidArgument };
using BatteryError = KindedError<BatteryErrorKind>;

/// Piecewise-linear function of SOC (%) held as sorted breakpoints; flat
/// extrapolation outside the first and last breakpoint.
class Curve {
 public:
  Curve() = default;
  explicit Curve(std::vector<std::pair<double, double>> points);

  [[nodiscard]] double operator()(double x) const;
  [[nodiscard]] bool empty() const noexcept { return points_.empty(); }
  [[nodiscard]] const std::vector<std::pair<double, double>>& points() const noexcept {
    return points_;
  }
  [[nodiscard]] bool nondecreasing() const noexcept;

 private:
  std::vector<std::pair<double, double>> points_;
};

/// Reads a `soc,ocv` CSV file.
Curve load_ocv_csv(const std::string& path);

struct RcBranch {
  double r = 0.0;  // ohm
  double c = 0.0;  // farad
  [[nodiscard]] double tau() const noexcept { return r * c; }
};

/// Single-cell electrical parameters. The default OCV is a flat
/// iron-phosphate style curve.
struct CellParams {
  double q_rated = 34.5 * 3600.0;  // A s
  Curve ocv = default_ocv();
  Curve ocv_eq;  // hysteresis midline; empty means "same as ocv"
  double r_ohm = 0.9e-3;
  double r_ct = 0.45e-3;
  std::vector<RcBranch> rc{{0.6e-3, 50000.0}};
  double du_dt = 1.0e-4;  // V/K
  double eta_farad = 0.99;
  double max_discharge_c = 4.0;
  double max_charge_c = 2.0;

  static Curve default_ocv();
  void validate() const;
  [[nodiscard]] double ocv_at(double soc) const { return ocv(soc); }
  [[nodiscard]] double ocv_eq_at(double soc) const { return ocv_eq.empty() ? ocv(soc) : ocv_eq(soc); }
  [[nodiscard]] double hysteresis(double soc) const { return ocv_eq_at(soc) - ocv_at(soc); }
};

struct ThermalParams {
  double c_th = 150000.0;  // J/K, whole pack
  double h_a = 25.0;       // W/K
};

struct PackConfig {
  int n_series = 88;
  int n_parallel = 2;
  double r_add = 0.010;  // ohm, interconnect
  double soh = 100.0;    // %
  double soc_floor = 20.0;
  double soc_ceiling = 100.0;
  ThermalParams thermal{};
  double nominal_energy = 20.0;  // kWh, declared
  double resistance_eol_ratio = 2.0;

  void validate() const;
  /// Effective pack capacity Q_rated * n_parallel * soh/100 in A s.
  [[nodiscard]] double q_effective(const CellParams& cp) const noexcept {
    return cp.q_rated * n_parallel * soh / 100.0;
  }
  /// Lumped series resistance seen at the terminals.
  [[nodiscard]] double r_total(const CellParams& cp) const noexcept {
    return n_series * (cp.r_ohm + cp.r_ct) / n_parallel + r_add;
  }
  [[nodiscard]] double max_discharge_current(const CellParams& cp) const noexcept {
    return cp.max_discharge_c * cp.q_rated / 3600.0 * n_parallel;
  }
  [[nodiscard]] double max_charge_current(const CellParams& cp) const noexcept {
    return cp.max_charge_c * cp.q_rated / 3600.0 * n_parallel;
  }
};

struct BatteryState {
  double soc = 100.0;           // %
  std::vector<double> u_diff;   // V per RC branch, per cell
  double u_hyst = 0.0;          // V per cell
  double temp = 25.0;           // degC
  double throughput_ah = 0.0;   // cumulative |I| dt
  bool clamped = false;         // last soc_step hit 0 or 100

  /// A rested state with branches sized for cp.
  static BatteryState rested(const CellParams& cp, double soc, double temp);
};

// All pack-level currents below are discharge-positive amperes.

/// Coulomb counting with Faraday efficiency on charge.
BatteryState soc_step(const BatteryState& s, double current, double dt, const CellParams& cp,
                      const PackConfig& pc);
/// Exact first-order update of each RC branch for a constant cell current.
BatteryState rc_step(const BatteryState& s, double cell_current, double dt, const CellParams& cp);
/// Pack terminal voltage under pack current.
double terminal_voltage(const BatteryState& s, double current, const CellParams& cp,
                        const PackConfig& pc);

/// Per-cell heat sources in W. `q_entropic` is the reversible term; the
/// rest are irreversible.
struct HeatBreakdown {
  double q_add = 0.0;
  double q_farad = 0.0;
  double q_entropic = 0.0;
  double q_hyst = 0.0;
  double q_ohm = 0.0;
  double q_ct = 0.0;
  double q_diff = 0.0;

  [[nodiscard]] double irreversible() const noexcept {
    return q_add + q_farad + q_hyst + q_ohm + q_ct + q_diff;
  }
  [[nodiscard]] double total() const noexcept { return irreversible() + q_entropic; }
};

HeatBreakdown heat_rate(const BatteryState& s, double cell_current, const CellParams& cp,
                        const PackConfig& pc = {});

/// Lumped thermal node driven by total pack heat in W, integrated exactly
/// with the heat input held constant over the step.
BatteryState thermal_step(const BatteryState& s, double q_pack, double dt, const PackConfig& pc,
                          double ambient);

double soh_capacity(double c_actual, double c_rated);
double soh_resistance(double r_current, double r_eol, double r_new);

/// Ages new-cell parameters to the given SOH. Capacity fade is carried by
/// pc.soh (through q_effective); every resistance grows linearly toward
/// resistance_eol_ratio at SOH 0.
std::pair<CellParams, PackConfig> apply_soh(const CellParams& cp, const PackConfig& pc, double soh);

/// Pack current delivering `power_kw` at the terminals with branch and
/// hysteresis voltages frozen over the step.
double solve_current(const BatteryState& s, double power_kw, const CellParams& cp,
                     const PackConfig& pc);

/// Largest deliverable terminal power (kW) respecting the discharge current limit.
double max_discharge_power(const BatteryState& s, const CellParams& cp, const PackConfig& pc);
/// Largest acceptable charge power (kW, positive) under the charge current
/// limit. It tapers over the last 2% below the ceiling so one step of `dt`
/// never overshoots.
double max_charge_power(const BatteryState& s, const CellParams& cp, const PackConfig& pc,
                        double dt = 1.0);

struct StepResult {
  BatteryState state;
  HeatBreakdown heat;      // per cell, evaluated on the state at step start
  double voltage = 0.0;    // terminal, V
  double current = 0.0;    // pack, A
  double ocv_cell = 0.0;   // open-circuit cell voltage at step start
};

/// One full electrical and thermal step under pack current.
StepResult step(const BatteryState& s, double current, double dt, const CellParams& cp,
                const PackConfig& pc, double ambient);

}  // namespace phev::battery
