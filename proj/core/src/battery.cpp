#include "phev/battery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace phev::battery {
namespace {

constexpr double kKelvin = 273.15;
constexpr double kTaperWidth = 2.0;  // % below the ceiling
constexpr double kLimitTolerance = 1e-9;

double sum_branches(const BatteryState& s) {
  double sum = 0.0;
  for (double u : s.u_diff) sum += u;
  return sum;
}

// Open-circuit EMF of the pack including hysteresis and branch voltages.
double pack_emf(const BatteryState& s, const CellParams& cp, const PackConfig& pc) {
  return pc.n_series * (cp.ocv_eq_at(s.soc) + sum_branches(s));
}

}  // namespace

Curve::Curve(std::vector<std::pair<double, double>> points) : points_(std::move(points)) {
  std::sort(points_.begin(), points_.end());
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (points_[i].first == points_[i - 1].first) {
      throw BatteryError(BatteryErrorKind::InvalidArgument, "duplicate curve breakpoint");
    }
  }
}

double Curve::operator()(double x) const {
  if (points_.empty()) return 0.0;
  if (x <= points_.front().first) return points_.front().second;
  if (x >= points_.back().first) return points_.back().second;
  const auto hi = std::upper_bound(points_.begin(), points_.end(), x,
                                   [](double v, const auto& p) { return v < p.first; });
  const auto lo = hi - 1;
  const double w = (x - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

bool Curve::nondecreasing() const noexcept {
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (points_[i].second < points_[i - 1].second) return false;
  }
  return true;
}

Curve load_ocv_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open OCV curve: " + path);
  std::string line;
  std::vector<std::pair<double, double>> pts;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "soc,ocv") throw ConfigError("OCV curve header must be `soc,ocv`: " + path);
      header = true;
      continue;
    }
    std::istringstream row(line);
    double soc = 0.0;
    double v = 0.0;
    char comma = 0;
    if (!(row >> soc >> comma >> v) || comma != ',') {
      throw ConfigError("malformed OCV row in " + path + ": " + line);
    }
    pts.emplace_back(soc, v);
  }
  if (pts.size() < 2) throw ConfigError("OCV curve needs at least two points: " + path);
  return Curve(std::move(pts));
}

Curve CellParams::default_ocv() {
  return Curve({{0.0, 2.80},
                {5.0, 3.10},
                {10.0, 3.20},
                {20.0, 3.25},
                {30.0, 3.28},
                {40.0, 3.29},
                {50.0, 3.30},
                {60.0, 3.31},
                {70.0, 3.32},
                {80.0, 3.33},
                {90.0, 3.34},
                {95.0, 3.36},
                {100.0, 3.40}});
}

void CellParams::validate() const {
  if (!(q_rated > 0.0)) throw ConfigError("battery.cell.q_rated must be positive");
  if (ocv.points().size() < 2) throw ConfigError("battery.cell.ocv needs at least two points");
  if (!ocv.nondecreasing()) throw ConfigError("battery.cell.ocv must be nondecreasing in SOC");
  if (r_ohm < 0.0 || r_ct < 0.0) throw ConfigError("cell resistances must be >= 0");
  for (const auto& b : rc) {
    if (b.r < 0.0 || !(b.c > 0.0)) throw ConfigError("RC branches need R >= 0 and C > 0");
  }
  if (!(eta_farad > 0.0 && eta_farad <= 1.0)) throw ConfigError("eta_farad must lie in (0, 1]");
  if (!(max_discharge_c > 0.0 && max_charge_c > 0.0)) throw ConfigError("C-rate limits must be positive");
}

void PackConfig::validate() const {
  if (n_series < 1 || n_parallel < 1) throw ConfigError("pack needs n_series, n_parallel >= 1");
  if (r_add < 0.0) throw ConfigError("battery.pack.r_add must be >= 0");
  if (!(soh > 0.0 && soh <= 100.0)) throw ConfigError("battery.pack.soh must lie in (0, 100]");
  if (!(soc_floor >= 0.0 && soc_floor < soc_ceiling && soc_ceiling <= 100.0)) {
    throw ConfigError("usable window needs 0 <= soc_floor < soc_ceiling <= 100");
  }
  if (!(thermal.c_th > 0.0) || thermal.h_a < 0.0) throw ConfigError("invalid thermal parameters");
  if (!(resistance_eol_ratio > 1.0)) throw ConfigError("resistance_eol_ratio must exceed 1");
}

BatteryState BatteryState::rested(const CellParams& cp, double soc, double temp) {
  BatteryState s;
  s.soc = soc;
  s.temp = temp;
  s.u_diff.assign(cp.rc.size(), 0.0);
  s.u_hyst = cp.hysteresis(soc);
  return s;
}

BatteryState soc_step(const BatteryState& s, double current, double dt, const CellParams& cp,
                      const PackConfig& pc) {
  if (!(dt > 0.0)) throw BatteryError(BatteryErrorKind::InvalidArgument, "dt must be positive");
  const double limit = current >= 0.0 ? pc.max_discharge_current(cp) : pc.max_charge_current(cp);
  if (std::abs(current) > limit * (1.0 + kLimitTolerance)) {
    throw BatteryError(BatteryErrorKind::CurrentLimit,
                       "pack current " + std::to_string(current) + " A exceeds limit " +
                           std::to_string(limit) + " A");
  }
  const double eta = current < 0.0 ? cp.eta_farad : 1.0;
  BatteryState out = s;
  const double next = s.soc - 100.0 * current * eta * dt / pc.q_effective(cp);
  out.clamped = next < -kLimitTolerance || next > 100.0 + kLimitTolerance;
  out.soc = std::clamp(next, 0.0, 100.0);
  out.u_hyst = cp.hysteresis(out.soc);
  out.throughput_ah += std::abs(current) * dt / 3600.0;
  return out;
}

BatteryState rc_step(const BatteryState& s, double cell_current, double dt, const CellParams& cp) {
  if (!(dt > 0.0)) throw BatteryError(BatteryErrorKind::InvalidArgument, "dt must be positive");
  BatteryState out = s;
  out.u_diff.resize(cp.rc.size(), 0.0);
  for (std::size_t i = 0; i < cp.rc.size(); ++i) {
    const double tau = cp.rc[i].tau();
    if (tau <= 0.0) {
      out.u_diff[i] = -cell_current * cp.rc[i].r;
      continue;
    }
    const double decay = std::exp(-dt / tau);
    out.u_diff[i] = out.u_diff[i] * decay - cell_current * cp.rc[i].r * (1.0 - decay);
  }
  return out;
}

double terminal_voltage(const BatteryState& s, double current, const CellParams& cp,
                        const PackConfig& pc) {
  const double i_cell = current / pc.n_parallel;
  return pc.n_series * (cp.ocv_at(s.soc) + cp.hysteresis(s.soc) + sum_branches(s) -
                        i_cell * (cp.r_ohm + cp.r_ct)) -
         current * pc.r_add;
}

HeatBreakdown heat_rate(const BatteryState& s, double cell_current, const CellParams& cp,
                        const PackConfig& pc) {
  const double i = cell_current;
  const double eta_eff = i < 0.0 ? cp.eta_farad : 1.0;
  HeatBreakdown h;
  h.q_add = i * i * pc.r_add * pc.n_parallel / pc.n_series;
  h.q_farad = std::max(-i, 0.0) * cp.ocv_eq_at(s.soc) * (1.0 - cp.eta_farad);
  h.q_entropic = -i * cp.du_dt * (s.temp + kKelvin) * eta_eff;
  h.q_hyst = -i * cp.hysteresis(s.soc);
  h.q_ohm = i * i * cp.r_ohm;
  h.q_ct = i * i * cp.r_ct;
  h.q_diff = -i * sum_branches(s);
  return h;
}

BatteryState thermal_step(const BatteryState& s, double q_pack, double dt, const PackConfig& pc,
                          double ambient) {
  if (!(dt > 0.0)) throw BatteryError(BatteryErrorKind::InvalidArgument, "dt must be positive");
  BatteryState out = s;
  const double c = pc.thermal.c_th;
  const double ha = pc.thermal.h_a;
  if (ha <= 0.0) {
    out.temp = s.temp + dt * q_pack / c;
  } else {
    // Exact solution for constant heat input, stable for any step.
    const double t_eq = ambient + q_pack / ha;
    out.temp = t_eq + (s.temp - t_eq) * std::exp(-dt * ha / c);
  }
  return out;
}

double soh_capacity(double c_actual, double c_rated) {
  if (!(c_rated > 0.0)) {
    throw BatteryError(BatteryErrorKind::InvalidArgument, "rated capacity must be positive");
  }
  return 100.0 * c_actual / c_rated;
}

double soh_resistance(double r_current, double r_eol, double r_new) {
  if (!(r_eol > r_new)) {
    throw BatteryError(BatteryErrorKind::DegenerateBounds, "R_EOL must exceed R_new");
  }
  return 100.0 * (r_eol - r_current) / (r_eol - r_new);
}

std::pair<CellParams, PackConfig> apply_soh(const CellParams& cp, const PackConfig& pc, double soh) {
  if (!(soh > 0.0 && soh <= 100.0)) {
    throw BatteryError(BatteryErrorKind::InvalidArgument, "soh must lie in (0, 100]");
  }
  const double k = 1.0 + (100.0 - soh) / 100.0 * (pc.resistance_eol_ratio - 1.0);
  CellParams c = cp;
  PackConfig p = pc;
  c.r_ohm *= k;
  c.r_ct *= k;
  for (auto& b : c.rc) b.r *= k;
  p.r_add *= k;
  p.soh = soh;
  return {c, p};
}

double solve_current(const BatteryState& s, double power_kw, const CellParams& cp,
                     const PackConfig& pc) {
  if (!std::isfinite(power_kw)) {
    throw BatteryError(BatteryErrorKind::InvalidArgument, "power must be finite");
  }
  if (power_kw == 0.0) return 0.0;
  const double e = pack_emf(s, cp, pc);
  const double r = pc.r_total(cp);
  const double p = power_kw * 1000.0;
  const double disc = e * e - 4.0 * r * p;
  if (disc < 0.0) {
    throw BatteryError(BatteryErrorKind::PowerInfeasible,
                       "requested " + std::to_string(power_kw) + " kW exceeds deliverable " +
                           std::to_string(e * e / (4.0 * r) / 1000.0) + " kW");
  }
  // Smaller-magnitude root of r I^2 - e I + p = 0 in a cancellation-free form.
  return 2.0 * p / (e + std::sqrt(disc));
}

double max_discharge_power(const BatteryState& s, const CellParams& cp, const PackConfig& pc) {
  if (s.soc <= 0.0) return 0.0;
  const double e = pack_emf(s, cp, pc);
  const double r = pc.r_total(cp);
  double i = pc.max_discharge_current(cp);
  if (r > 0.0) i = std::min(i, e / (2.0 * r));
  return std::max(0.0, (e * i - r * i * i) / 1000.0);
}

double max_charge_power(const BatteryState& s, const CellParams& cp, const PackConfig& pc,
                        double dt) {
  const double room = pc.soc_ceiling - s.soc;
  if (room <= 0.0) return 0.0;
  const double e = pack_emf(s, cp, pc);
  const double r = pc.r_total(cp);
  // Charge that would exactly fill the window within dt.
  const double i_fill = room / 100.0 * pc.q_effective(cp) / (cp.eta_farad * dt);
  const double taper = std::clamp(room / kTaperWidth, 0.0, 1.0);
  const double i = std::min(pc.max_charge_current(cp) * taper, i_fill);
  return (e * i + r * i * i) / 1000.0;
}

StepResult step(const BatteryState& s, double current, double dt, const CellParams& cp,
                const PackConfig& pc, double ambient) {
  StepResult out;
  out.current = current;
  out.voltage = terminal_voltage(s, current, cp, pc);
  out.ocv_cell = cp.ocv_at(s.soc);
  const double i_cell = current / pc.n_parallel;
  out.heat = heat_rate(s, i_cell, cp, pc);
  BatteryState next = soc_step(s, current, dt, cp, pc);
  next = rc_step(next, i_cell, dt, cp);
  const double q_pack = out.heat.total() * pc.n_series * pc.n_parallel;
  next = thermal_step(next, q_pack, dt, pc, ambient);
  out.state = std::move(next);
  return out;
}

}  // namespace phev::battery
