#pragma once

#include <array>

namespace phev::dynamics {

enum class RoadLoadForm { Physical, Coefficient };

/// Longitudinal vehicle parameters. Speeds are in m/s throughout this module.
struct VehicleParams {
  double mass = 1900.0;        // kg, curb mass
  double load = 100.0;         // kg, occupants and cargo
  double frontal_area = 2.62;  // m^2
  double drag_coeff = 0.33;
  // Rolling resistance polynomial f + k*v + w*v^2 (dimensionless, s/m, s^2/m^2).
  double roll_f = 0.012;
  double roll_k = 0.0;
  double roll_w = 0.9e-5;
  // Coefficient road-load form A*(v>0) + B*v + C*v^2 (N, N s/m, N s^2/m^2).
  double coeff_a = 181.8;
  double coeff_b = 0.0;
  double coeff_c = 0.5188;
  double equiv_mass_factor = 1.05;  // m_eq = factor * (mass + load)
  RoadLoadForm form = RoadLoadForm::Physical;

  [[nodiscard]] double total_mass() const noexcept { return mass + load; }
  void validate() const;
};

struct Environment {
  double air_density = 1.2;  // kg/m^3
  double gravity = 9.81;     // m/s^2
  double wind_speed = 0.0;   // m/s, headwind positive
  double ambient_temp = 25.0;  // degC

  void validate() const;
};

/// Grade resistance (m+load) g sin(atan(grade/100)).
double grade_force(const VehicleParams& vp, const Environment& env, double grade_pct);
double aero_force(const VehicleParams& vp, const Environment& env, double v);
/// Rolling resistance; zero at standstill.
double roll_force(const VehicleParams& vp, const Environment& env, double v);
/// Steady-state resistance in the form selected by vp.form.
double road_load(const VehicleParams& vp, const Environment& env, double v, double grade_pct);
/// Signed wheel power demand in kW: (a * m_eq + F_road) * v / 1000.
double power_demand(const VehicleParams& vp, const Environment& env, double v, double a,
                    double grade_pct);

/// Least-squares fit of A, B, C to the physical form over [0, v_max] (m/s)
/// on n evenly spaced speeds. Result is {A, B, C}.
std::array<double, 3> fit_road_load(const VehicleParams& vp, const Environment& env,
                                    double v_max = 140.0 / 3.6, int n = 141);

}  // namespace phev::dynamics
