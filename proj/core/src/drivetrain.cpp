#include "phev/drivetrain.hpp"

#include <algorithm>
#include <cmath>

namespace phev::drivetrain {
namespace {

constexpr double kTol = 1e-9;
constexpr int kBisectIterations = 200;

// Inverse of an increasing function on [lo, hi], saturating at the ends.
template <typename F>
double invert(F f, double target, double lo, double hi) {
  if (target <= f(lo)) return lo;
  if (target >= f(hi)) return hi;
  for (int i = 0; i < kBisectIterations && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double gen_elec(double shaft, const MachineParams& g) {
  return shaft <= 0.0 ? 0.0 : shaft * g.efficiency(shaft);
}

// Largest drive-side traction shaft power whose electrical draw fits in `elec_budget`.
double traction_for_budget(double elec_budget, double upper, const DrivetrainParams& dp) {
  if (elec_budget <= 0.0 || upper <= 0.0) return 0.0;
  return invert([&](double m) { return traction_elec_power(m, dp); }, elec_budget, 0.0, upper);
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::EV: return "EV";
    case Mode::Series: return "Series";
    case Mode::Parallel: return "Parallel";
    case Mode::ICE: return "ICE";
  }
  return "?";
}

std::optional<Mode> mode_from_string(const std::string& s) {
  for (Mode m : {Mode::EV, Mode::Series, Mode::Parallel, Mode::ICE}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

void MachineParams::validate() const {
  if (!(max_power > 0.0 && rated_power > 0.0 && max_power >= rated_power)) {
    throw ConfigError("machine ratings need max_power >= rated_power > 0");
  }
  if (!(eta_peak > 0.0 && eta_peak <= 1.0 && eta_min > 0.0 && eta_min <= eta_peak)) {
    throw ConfigError("machine efficiencies need 0 < eta_min <= eta_peak <= 1");
  }
  if (eta_c < 0.0) throw ConfigError("machine efficiency curvature must be >= 0");
}

double MachineParams::efficiency(double power_abs) const {
  const double d = std::abs(power_abs) / max_power - p_opt;
  return std::max(eta_min, eta_peak - eta_c * d * d);
}

void DrivetrainParams::validate() const {
  front.validate();
  rear.validate();
  generator.validate();
  if (!(driveline_efficiency > 0.0 && driveline_efficiency <= 1.0)) {
    throw ConfigError("drivetrain.driveline_efficiency must lie in (0, 1]");
  }
  if (aux_power < 0.0) throw ConfigError("drivetrain.aux_power must be >= 0");
  if (!(soc_target > 0.0 && soc_target <= 100.0)) throw ConfigError("drivetrain.soc_target out of range");
  if (charge_gain < 0.0 || max_charge_request < 0.0) throw ConfigError("charge request terms must be >= 0");
  if (regen_min_speed < 0.0) throw ConfigError("drivetrain.regen_min_speed must be >= 0");
  if (!(regen_fraction >= 0.0 && regen_fraction <= 1.0)) {
    throw ConfigError("drivetrain.regen_fraction must lie in [0, 1]");
  }
}

double DrivetrainParams::charge_request(double soc) const noexcept {
  return std::clamp(charge_gain * (soc_target - soc), 0.0, max_charge_request);
}

double motor_elec_power(double p_mech, const MachineParams& mp) {
  if (std::abs(p_mech) > mp.max_power * (1.0 + kTol)) {
    throw DrivetrainError(DrivetrainErrorKind::MachineOverload,
                          "machine power " + std::to_string(p_mech) + " kW exceeds rating " +
                              std::to_string(mp.max_power) + " kW");
  }
  if (p_mech == 0.0) return 0.0;
  const double eta = mp.efficiency(p_mech);
  return p_mech > 0.0 ? p_mech / eta : p_mech * eta;
}

double traction_elec_power(double p_mech, const DrivetrainParams& dp) {
  const double share = dp.front.max_power / dp.motor_max_power();
  return motor_elec_power(p_mech * share, dp.front) + motor_elec_power(p_mech * (1.0 - share), dp.rear);
}

double regen_capacity(double speed_ms, double battery_charge_limit_kw, const MachineParams& front,
                      const MachineParams& rear, double min_speed_kmh) {
  const double v_kmh = speed_ms * 3.6;
  if (v_kmh <= 0.0) return 0.0;
  const double taper = min_speed_kmh > 0.0 ? std::clamp(v_kmh / min_speed_kmh, 0.0, 1.0) : 1.0;
  const double cap = std::min(front.max_power + rear.max_power, std::max(battery_charge_limit_kw, 0.0));
  return cap * taper;
}

PowerSplit execute_mode(Mode mode, const SplitInputs& in, const DrivetrainParams& dp,
                        const engine::EngineMap& em) {
  PowerSplit s;
  s.mode = mode;
  s.p_demand = in.p_demand;
  s.p_aux = dp.aux_power;
  const double pd = in.p_demand;
  const double eta_dl = dp.driveline_efficiency;
  const double motor_max = dp.motor_max_power();
  const double dis_budget = in.batt_max_discharge - dp.aux_power;  // for traction draw
  const auto traction = [&](double m) { return traction_elec_power(m, dp); };
  const auto gen = [&](double shaft) { return gen_elec(shaft, dp.generator); };
  const double gen_shaft_cap = std::min(em.max_power, dp.generator.max_power);

  double motor_m = 0.0;
  double engine_wheel = 0.0;
  double engine_gen = 0.0;

  if (pd <= 0.0) {
    const double regen = std::min(-pd * dp.regen_fraction, regen_capacity(in.speed_ms, in.batt_max_charge, dp.front,
                                                      dp.rear, dp.regen_min_speed));
    motor_m = -regen;
    s.p_friction_brake = -pd - regen;
  } else {
    switch (mode) {
      case Mode::EV: {
        motor_m = std::min(pd, motor_max);
        if (traction(motor_m) > dis_budget) motor_m = traction_for_budget(dis_budget, motor_m, dp);
        break;
      }
      case Mode::Series: {
        motor_m = std::min(pd, motor_max);
        const double motor_e = traction(motor_m);
        const double charge = std::min(dp.charge_request(in.soc), in.batt_max_charge);
        const double need = motor_e + dp.aux_power + charge;
        const double shaft_req = invert(gen, need, 0.0, gen_shaft_cap);
        const double absorb = motor_e + dp.aux_power + std::max(in.batt_max_charge, 0.0);
        const double shaft_up = invert(gen, absorb, 0.0, gen_shaft_cap);
        const auto lp =
            engine::best_bsfc_power(em, shaft_req, {std::max(shaft_up - shaft_req, 0.0), 0.0});
        engine_gen = std::min({lp.power_kw, gen_shaft_cap, std::max(shaft_up, shaft_req)});
        s.engine_snapped = lp.snapped;
        const double budget = dis_budget + gen(engine_gen);
        if (motor_e > budget) motor_m = traction_for_budget(budget, motor_m, dp);
        break;
      }
      case Mode::Parallel: {
        const double te = em.optimal_power();
        const double charge = std::min(dp.charge_request(in.soc), std::max(in.batt_max_charge, 0.0));
        if (charge > 0.0) {
          // Below the SOC target the engine also covers a charging share.
          engine_wheel = std::min(em.max_power, std::max(te, (pd + charge) / eta_dl));
          motor_m = std::clamp(pd - engine_wheel * eta_dl, -motor_max, motor_max);
          const double accept = std::max(in.batt_max_charge, 0.0) + dp.aux_power;
          if (motor_m < 0.0 && -traction(motor_m) > accept) {
            motor_m = -invert([&](double m) { return -traction(-m); }, accept, 0.0, -motor_m);
          }
          if (motor_m > 0.0 && traction(motor_m) > dis_budget) {
            motor_m = traction_for_budget(dis_budget, motor_m, dp);
          }
          engine_wheel = std::min(em.max_power, (pd - motor_m) / eta_dl);
        } else if (pd >= te * eta_dl) {
          engine_wheel = te;
          motor_m = std::min(pd - te * eta_dl, motor_max);
          if (traction(motor_m) > dis_budget) motor_m = traction_for_budget(dis_budget, motor_m, dp);
          engine_wheel = std::min(em.max_power, std::max(te, (pd - motor_m) / eta_dl));
        } else {
          // Hold the engine at its best point and bank the surplus.
          motor_m = std::max(pd - te * eta_dl, -motor_max);
          const double accept = std::max(in.batt_max_charge, 0.0) + dp.aux_power;
          if (-traction(motor_m) > accept) {
            motor_m = -invert([&](double m) { return -traction(-m); }, accept, 0.0, -motor_m);
          }
          engine_wheel = (pd - motor_m) / eta_dl;
        }
        break;
      }
      case Mode::ICE: {
        engine_wheel = std::min(em.max_power, pd / eta_dl);
        const double charge = in.soc < dp.soc_target
                                  ? std::min(dp.charge_request(in.soc), in.batt_max_charge)
                                  : 0.0;
        if (charge > 0.0) {
          const double spare = std::min(em.max_power - engine_wheel, gen_shaft_cap);
          engine_gen = std::max(0.0, std::min(spare, invert(gen, charge, 0.0, gen_shaft_cap)));
        }
        break;
      }
    }
  }

  s.p_motor_mech = motor_m;
  s.p_motor_elec = traction(motor_m);
  s.p_engine_wheel = engine_wheel;
  s.p_engine_gen = engine_gen;
  s.p_engine_mech = engine_wheel + engine_gen;
  s.p_gen_elec = gen(engine_gen);
  s.p_batt = s.p_motor_elec + s.p_aux - s.p_gen_elec;
  s.motor_loss = s.p_motor_elec - s.p_motor_mech;
  s.generator_loss = s.p_engine_gen - s.p_gen_elec;
  s.driveline_loss = s.p_engine_wheel * (1.0 - eta_dl);
  if (pd > 0.0) s.p_shortfall = std::max(0.0, pd - s.wheel_delivered());
  // Any surplus from engine floors lands in the friction brake so the wheel
  // balance stays exact.
  const double surplus = s.wheel_delivered() - s.p_friction_brake + s.p_shortfall - pd;
  if (surplus > 0.0) s.p_friction_brake += surplus;
  s.saturated = s.p_shortfall > kTol || s.p_batt > in.batt_max_discharge + kTol ||
                -s.p_batt > std::max(in.batt_max_charge, 0.0) + kTol;
  return s;
}

}  // namespace phev::drivetrain
