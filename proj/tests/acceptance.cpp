// Acceptance runner: evaluates the fifteen criteria against the shipped
// configuration and prints one PASS/FAIL line each. Exit status is the
// number of failures (capped at 1 for ctest).
//
//   phev_acceptance [--config PATH] [--set key=value ...] [--only N,N]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "phev/battery.hpp"
#include "phev/config.hpp"
#include "phev/controller.hpp"
#include "phev/cycle.hpp"
#include "phev/predictor.hpp"
#include "phev/sim.hpp"

namespace fs = std::filesystem;
using namespace phev;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

config::AppConfig g_cfg;
std::string g_config_path;
std::vector<std::string> g_sets;

sim::ScenarioConfig wltc_scenario() { return config::make_scenario(g_cfg); }

// ---- A. calibration -------------------------------------------------------

Outcome a1_ev_range() {
  auto sc = wltc_scenario();
  sc.init_soc = 100.0;
  const double km = sim::ev_range(sc);
  return {std::abs(km - 84.0) <= 10.0, fmt("range %.2f km (target 84 +/- 10)", km)};
}

Outcome a2_ev_delta_soc() {
  auto sc = wltc_scenario();
  sc.init_soc = 100.0;
  sc.forced_mode = drivetrain::Mode::EV;
  sc.record_trace = false;
  const double d = sim::run(sc).summary.delta_soc;
  return {std::abs(d - 27.0) <= 3.0, fmt("delta SOC %.2f %% (target 27 +/- 3)", d)};
}

Outcome a3_hybrid_fc() {
  auto sc = wltc_scenario();
  sc.init_soc = 90.0;
  sc.record_trace = false;
  const auto s = sim::run(sc).summary;
  return {s.fc_total >= 2.5 && s.fc_total <= 3.3,
          fmt("fc_total %.3f L/100km (gas %.3f, elect %.3f; window [2.5, 3.3])", s.fc_total, s.fc_gasoline,
              s.fc_elect)};
}

// ---- B. trends ------------------------------------------------------------

Outcome b4_constant_speed() {
  const std::vector<double> speeds{20, 40, 60, 80, 100, 120, 140};
  auto base = wltc_scenario();
  base.init_soc = 90.0;
  const auto rows = sim::sweep_constant_speed(speeds, base, 600.0);
  bool ok = true;
  std::string d;
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (speeds[i] < 100.0 && rows[i].fc_gasoline != 0.0) ok = false;
    d += fmt("%g:gas %.3f dSOC %.2f; ", speeds[i], rows[i].fc_gasoline, rows[i].delta_soc);
  }
  const double d120 = rows[5].delta_soc;
  const double d140 = rows[6].delta_soc;
  ok = ok && d120 < 0.0 && d140 > 0.0;
  return {ok, d};
}

Outcome b5_init_soc() {
  const std::vector<double> socs{50, 70, 90};
  const auto r = sim::sweep_init_soc(socs, wltc_scenario());
  const double f50 = r[0].fc_gasoline, f70 = r[1].fc_gasoline, f90 = r[2].fc_gasoline;
  return {f50 > f70 && f70 > f90 && f90 <= f50 - 1.5,
          fmt("fc_gasoline 50%%: %.3f, 70%%: %.3f, 90%%: %.3f", f50, f70, f90)};
}

Outcome b6_soh() {
  const std::vector<double> sohs{100, 80};
  const auto r = sim::sweep_soh(sohs, wltc_scenario());
  return {r[0].fc_total < r[1].fc_total && r[0].fc_elect > r[1].fc_elect,
          fmt("SOH 100: total %.3f elect %.3f; SOH 80: total %.3f elect %.3f", r[0].fc_total, r[0].fc_elect,
              r[1].fc_total, r[1].fc_elect)};
}

Outcome b7_energy_split() {
  auto sc = wltc_scenario();
  sc.record_trace = false;
  const double ice = sim::run(sc).summary.energy_split_ice;
  return {std::abs(ice - 51.0) <= 10.0, fmt("ICE share %.2f %% (target 51 +/- 10)", ice)};
}

Outcome b8_tehran() {
  std::vector<sim::ScenarioConfig> list;
  for (int i = 1; i <= 6; ++i) {
    list.push_back(config::make_scenario(g_cfg, cycle::synthesize(cycle::tehran_preset(i, 1))));
  }
  const auto r = sim::sweep(list);
  const double low = std::max(r[1].fc_total, r[5].fc_total);
  const double high = std::min({r[0].fc_total, r[3].fc_total, r[4].fc_total});
  std::string d;
  for (int i = 0; i < 6; ++i) d += fmt("T%d %.3f; ", i + 1, r[i].fc_total);
  return {low < high, d};
}

// ---- C. properties --------------------------------------------------------

// Deterministic stream for property inputs (splitmix64).
struct Mix {
  std::uint64_t s;
  double next() {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  double in(double lo, double hi) { return lo + (hi - lo) * next(); }
};

Outcome c9_rc_step() {
  Mix m{2024};
  double worst = 0.0;
  for (int k = 0; k < 20000; ++k) {
    battery::CellParams cp;
    const double r = m.in(1e-4, 5e-2), c = m.in(10.0, 1e5);
    cp.rc = {{r, c}};
    auto s = battery::BatteryState::rested(cp, 50.0, 25.0);
    const double u0 = m.in(-0.2, 0.2);
    s.u_diff[0] = u0;
    const double i = m.in(-300.0, 300.0), dt = m.in(1e-3, 100.0);
    const double tau = r * c;
    const double expect = u0 * std::exp(-dt / tau) - i * r * (1.0 - std::exp(-dt / tau));
    const double got = battery::rc_step(s, i, dt, cp).u_diff[0];
    const double scale = std::max({std::abs(expect), std::abs(u0), std::abs(i * r), 1e-300});
    worst = std::max(worst, std::abs(got - expect) / scale);
  }
  return {worst <= 1e-9, fmt("worst relative error %.3e over 20000 draws", worst)};
}

Outcome c10_ledger() {
  std::vector<sim::ScenarioConfig> list;
  auto base = wltc_scenario();
  for (double soc : {90.0, 50.0, 30.0}) {
    auto sc = base;
    sc.init_soc = soc;
    list.push_back(sc);
  }
  auto ev = base;
  ev.forced_mode = drivetrain::Mode::EV;
  list.push_back(ev);
  auto aged = base;
  aged.soh = 80.0;
  list.push_back(aged);
  list.push_back(config::make_scenario(g_cfg, cycle::constant_speed(130.0, 600.0)));
  list.push_back(config::make_scenario(g_cfg, cycle::synthesize(cycle::tehran_preset(4, 1))));
  const auto r = sim::sweep(list);
  double worst = 0.0, bus = 0.0, wheel = 0.0;
  for (const auto& s : r) {
    worst = std::max(worst, s.ledger.relative_residual());
    bus = std::max(bus, s.max_bus_error);
    wheel = std::max(wheel, s.max_wheel_error);
  }
  return {worst <= 0.005 && bus <= 1e-9 && wheel <= 1e-9,
          fmt("worst ledger residual %.3e, bus error %.2e kW, wheel error %.2e kW over %zu runs", worst, bus,
              wheel, r.size())};
}

Outcome c11_solve_current() {
  battery::CellParams cp;
  cp.ocv = battery::Curve({{0.0, 360.0}, {100.0, 360.0}});
  cp.r_ohm = 0.1;
  cp.r_ct = 0.0;
  cp.rc.clear();
  cp.du_dt = 0.0;
  battery::PackConfig pc;
  pc.n_series = 1;
  pc.n_parallel = 1;
  pc.r_add = 0.0;
  const auto s = battery::BatteryState::rested(cp, 50.0, 25.0);
  const double i = battery::solve_current(s, 35.0, cp, pc);
  bool infeasible = false;
  try {
    battery::solve_current(s, 324.0 * (1.0 + 1e-9), cp, pc);
  } catch (const battery::BatteryError& e) {
    infeasible = e.kind() == battery::BatteryErrorKind::PowerInfeasible;
  }
  const double at_limit = battery::solve_current(s, 324.0, cp, pc);
  return {std::abs(i - 100.0) <= 1e-6 && infeasible && std::abs(at_limit - 1800.0) <= 1e-6,
          fmt("I(35 kW) = %.9f A, I(324 kW) = %.6f A, above limit %s", i, at_limit,
              infeasible ? "rejected" : "accepted")};
}

Outcome c12_rulebase() {
  const auto& cfg = g_cfg.models.controller;
  using drivetrain::Mode;
  bool ok = cfg.rules.size() == 30;
  // Coverage grid: 20 points per axis over each universe.
  long uncovered = 0;
  const auto axis = [&](std::size_t v, int k) {
    const auto& var = cfg.variables[v];
    return var.min + (var.max - var.min) * k / 19.0;
  };
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b)
      for (int c = 0; c < 20; ++c)
        for (int d = 0; d < 20; ++d) {
          const controller::Inputs in{axis(0, a), axis(1, b), axis(2, c), axis(3, d)};
          const auto act = controller::evaluate(cfg, in);
          if (*std::max_element(act.begin(), act.end()) <= 0.0) ++uncovered;
        }
  ok = ok && uncovered == 0;

  const auto strictly_top = [](const controller::Activations& act, Mode m) {
    for (int k = 0; k < drivetrain::kModeCount; ++k) {
      if (k != static_cast<int>(m) && act[k] >= act[static_cast<int>(m)]) return false;
    }
    return true;
  };
  const bool ev = strictly_top(controller::evaluate(cfg, {30, 90, 85, 10}), Mode::EV);
  const bool series = strictly_top(controller::evaluate(cfg, {120, 25, 15, 30}), Mode::Series);
  // Above what the pack can deliver at SOC 50.
  battery::PackConfig pc = g_cfg.models.pack;
  const auto st = battery::BatteryState::rested(g_cfg.models.cell, 50.0, 25.0);
  const double pmax = battery::max_discharge_power(st, g_cfg.models.cell, pc);
  const double over = std::min(pmax * 1.1, cfg.variables[3].max);
  const bool parallel = strictly_top(controller::evaluate(cfg, {60, 50, 50, over}), Mode::Parallel);
  const controller::Inputs brake{60, 60, 60, -15};
  const auto act = controller::evaluate(cfg, brake);
  bool regen = true;
  for (Mode prev : {Mode::Series, Mode::Parallel, Mode::ICE, Mode::EV}) {
    regen = regen && controller::decide(act, prev, 100.0, cfg, brake) == Mode::EV;
  }
  ok = ok && ev && series && parallel && regen;
  return {ok, fmt("%zu rules, %ld uncovered grid points, EV %d, Series %d, Parallel %d (at %.1f kW), regen %d",
                  cfg.rules.size(), uncovered, ev, series, parallel, over, regen)};
}

Outcome c13_predictor() {
  // Finite-difference check on a small random problem.
  Mix m{99};
  auto net = predictor::Network::glorot(16, 5);
  std::vector<predictor::FeatureArray> x(24);
  std::vector<double> y(24);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (auto& v : x[i]) v = m.in(-2.0, 2.0);
    y[i] = m.in(-1.0, 1.0);
  }
  const double l2 = 1e-3;
  const auto lg = predictor::loss_and_gradient(net, x, y, l2);
  auto p = net.flatten();
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(p[k]));
    auto q = p;
    q[k] = p[k] + h;
    predictor::Network a = net;
    a.unflatten(q);
    q[k] = p[k] - h;
    predictor::Network b = net;
    b.unflatten(q);
    const double fd = (predictor::loss_and_gradient(a, x, y, l2).loss - predictor::loss_and_gradient(b, x, y, l2).loss) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(fd - lg.grad[k]) / std::max(std::abs(fd) + std::abs(lg.grad[k]), 1e-6));
  }
  const auto run = config::train_soc_predictor(g_cfg);
  return {worst <= 1e-5 && run.model.r2_test >= 0.9,
          fmt("gradient worst relative error %.2e; R2 train %.4f test %.4f on %zu/%zu rows", worst,
              run.model.r2_train, run.model.r2_test, run.model.rows_train, run.model.rows_test)};
}

Outcome c14_cycle_stats() {
  const auto st = cycle::stats(cycle::load_cycle(g_cfg.cycle_path));
  const auto rel = [](double a, double b) { return std::abs(a - b) / b; };
  const double dd = rel(st.total_distance, 23450.0), da = rel(st.avg_speed, 46.0), dm = rel(st.max_speed, 131.2);
  return {dd <= 0.02 && da <= 0.02 && dm <= 0.02 && st.num_stops == 8,
          fmt("distance %.1f m (%.2f%%), avg %.2f km/h (%.2f%%), max %.1f km/h (%.2f%%), stops %d",
              st.total_distance, 100 * dd, st.avg_speed, 100 * da, st.max_speed, 100 * dm, st.num_stops)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome c15_determinism() {
  // Library level: two runs of the same scenario give identical traces.
  auto sc = wltc_scenario();
  const auto r1 = sim::run(sc), r2 = sim::run(sc);
  std::ostringstream t1, t2;
  sim::write_trace_csv(t1, r1.trace);
  sim::write_trace_csv(t2, r2.trace);
  bool ok = t1.str() == t2.str();
  std::string d = ok ? "library run identical" : "library run differs";

  // Every CLI command, executed twice into separate directories.
  const fs::path root = fs::temp_directory_path() / fmt("phev_accept_%ld", static_cast<long>(::getpid()));
  fs::remove_all(root);
  std::string cfg_arg = g_config_path.empty() ? "" : " --config '" + g_config_path + "'";
  for (const auto& s : g_sets) cfg_arg += " --set '" + s + "'";
  const std::string wltc = g_cfg.cycle_path;
  struct Cmd {
    std::string name, args;
    std::vector<std::string> files;
  };
  const std::vector<Cmd> cmds = {
      {"simulate", "simulate --seed 7" + cfg_arg + " --out {d}", {"trace.csv", "summary.json"}},
      {"stats", "stats '" + wltc + "' --out {d}/stats.json", {"stats.json"}},
      {"synth", "synth --preset 2 --seed 3 --out {d}/t2.csv", {"t2.csv"}},
      {"train", "train --seed 3" + cfg_arg + " --set predictor.epochs=200 --out {d}", {"soc_predictor.json"}},
      {"sweep", "sweep --init-soc 90,70,50" + cfg_arg + " --out {d}", {"sweep.csv", "sweep.json"}},
      {"range", "range" + cfg_arg + " > {d}/range.txt", {"range.txt"}},
  };
  for (const auto& c : cmds) {
    std::string out[2];
    bool ran = true;
    for (int k = 0; k < 2; ++k) {
      const fs::path dir = root / c.name / std::to_string(k);
      fs::create_directories(dir);
      std::string args = c.args;
      for (std::size_t pos; (pos = args.find("{d}")) != std::string::npos;) args.replace(pos, 3, dir.string());
      std::string cmd = std::string("'") + PHEV_CLI_PATH + "' " + args;
      if (cmd.find('>') == std::string::npos) cmd += " > /dev/null";
      const int rc = std::system(cmd.c_str());
      if (rc != 0) ran = false;
      for (const auto& f : c.files) out[k] += slurp(dir / f) + '\x1f';
    }
    const bool same = ran && !out[0].empty() && out[0] == out[1];
    ok = ok && same;
    d += "; " + c.name + (same ? " identical" : ran ? " DIFFERS" : " FAILED");
  }
  fs::remove_all(root);
  return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  g_config_path = (fs::path(PHEV_DATA_DIR) / "config" / "default.json").string();
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      g_config_path = fs::absolute(argv[++i]).string();
    } else if (a == "--set" && i + 1 < argc) {
      g_sets.emplace_back(argv[++i]);
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else {
      std::fprintf(stderr, "usage: %s [--config PATH] [--set key=value]... [--only N,N]\n", argv[0]);
      return 2;
    }
  }
  try {
    g_cfg = config::load(g_config_path, g_sets);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cannot load configuration: %s\n", e.what());
    return 1;
  }

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all = {
      {1, "EV range on repeated WLTC", a1_ev_range},
      {2, "EV delta SOC on one WLTC", a2_ev_delta_soc},
      {3, "hybrid WLTC total consumption", a3_hybrid_fc},
      {4, "constant-speed sweep", b4_constant_speed},
      {5, "initial-SOC sweep", b5_init_soc},
      {6, "SOH sweep", b6_soh},
      {7, "WLTC energy split", b7_energy_split},
      {8, "Tehran-style cycle ordering", b8_tehran},
      {9, "RC branch exact update", c9_rc_step},
      {10, "energy ledger closure", c10_ledger},
      {11, "terminal current solution", c11_solve_current},
      {12, "fuzzy rule base", c12_rulebase},
      {13, "SOC predictor", c13_predictor},
      {14, "WLTC statistics", c14_cycle_stats},
      {15, "determinism", c15_determinism},
  };
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s  %2d  %-32s %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, only.empty() ? all.size() : only.size());
  return failures == 0 ? 0 : 1;
}
