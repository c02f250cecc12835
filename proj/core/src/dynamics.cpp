#include "phev/dynamics.hpp"

#include <cmath>

#include "phev/error.hpp"

namespace phev::dynamics {

void VehicleParams::validate() const {
  if (!(mass > 0.0)) throw ConfigError("vehicle.mass must be positive");
  if (!(load >= 0.0)) throw ConfigError("vehicle.load must be nonnegative");
  if (!(frontal_area > 0.0)) throw ConfigError("vehicle.frontal_area must be positive");
  if (!(drag_coeff > 0.0)) throw ConfigError("vehicle.drag_coeff must be positive");
  if (!(equiv_mass_factor >= 1.0)) throw ConfigError("vehicle.equiv_mass_factor must be >= 1");
}

void Environment::validate() const {
  if (!(air_density > 0.0)) throw ConfigError("environment.air_density must be positive");
  if (!(gravity > 0.0)) throw ConfigError("environment.gravity must be positive");
}

double grade_force(const VehicleParams& vp, const Environment& env, double grade_pct) {
  return vp.total_mass() * env.gravity * std::sin(std::atan(grade_pct / 100.0));
}

double aero_force(const VehicleParams& vp, const Environment& env, double v) {
  const double rel = v + env.wind_speed;
  return 0.5 * env.air_density * vp.frontal_area * vp.drag_coeff * rel * rel;
}

double roll_force(const VehicleParams& vp, const Environment& env, double v) {
  if (v <= 0.0) return 0.0;
  const double rel = v + env.wind_speed;
  return vp.total_mass() * env.gravity * (vp.roll_f + vp.roll_k * rel + vp.roll_w * rel * rel);
}

double road_load(const VehicleParams& vp, const Environment& env, double v, double grade_pct) {
  const double climb = grade_force(vp, env, grade_pct);
  if (vp.form == RoadLoadForm::Coefficient) {
    return (v > 0.0 ? vp.coeff_a : 0.0) + vp.coeff_b * v + vp.coeff_c * v * v + climb;
  }
  return aero_force(vp, env, v) + roll_force(vp, env, v) + climb;
}

double power_demand(const VehicleParams& vp, const Environment& env, double v, double a,
                    double grade_pct) {
  if (v == 0.0) return 0.0;
  const double force = a * vp.equiv_mass_factor * vp.total_mass() + road_load(vp, env, v, grade_pct);
  return force * v / 1000.0;
}

std::array<double, 3> fit_road_load(const VehicleParams& vp, const Environment& env, double v_max,
                                    int n) {
  // Normal equations for F(v) = A + B v + C v^2 over v in (0, v_max].
  double m[3][4] = {};
  for (int i = 1; i <= n; ++i) {
    const double v = v_max * i / n;
    const double f = aero_force(vp, env, v) + roll_force(vp, env, v);
    const double basis[3] = {1.0, v, v * v};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] += basis[r] * basis[c];
      m[r][3] += basis[r] * f;
    }
  }
  // Gauss-Jordan with partial pivoting on the 3x4 augmented matrix.
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    for (int c = 0; c < 4; ++c) std::swap(m[col][c], m[pivot][c]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double factor = m[r][col] / m[col][col];
      for (int c = col; c < 4; ++c) m[r][c] -= factor * m[col][c];
    }
  }
  return {m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]};
}

}  // namespace phev::dynamics
