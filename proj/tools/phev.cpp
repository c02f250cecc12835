#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "phev/config.hpp"
#include "phev/cycle.hpp"
#include "phev/predictor.hpp"
#include "phev/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace phev;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitSaturated = 2;

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::optional<double> stop_threshold;
  std::string rulebase;
};

// Installed layout (<prefix>/bin next to <prefix>/share/phevsim) first, then the source tree.
std::string default_config_path() {
  std::error_code ec;
  const fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  std::vector<fs::path> candidates;
  if (!ec) candidates.push_back(exe.parent_path().parent_path() / "share" / "phevsim" / "config" / "default.json");
  candidates.push_back(fs::path(PHEV_DATA_DIR) / "config" / "default.json");
  for (const auto& p : candidates) {
    if (fs::exists(p)) return p.string();
  }
  return {};
}

config::AppConfig load_config(const Common& c, bool load_model = true) {
  std::vector<std::string> sets = c.sets;
  if (c.seed) sets.push_back("scenario.seed=" + std::to_string(*c.seed));
  if (c.stop_threshold) {
    std::ostringstream s;
    s.precision(17);
    s << "scenario.stop_threshold=" << *c.stop_threshold;
    sets.push_back(s.str());
  }
  if (!c.rulebase.empty()) {
    sets.push_back("controller.rulebase=" + json(fs::absolute(c.rulebase).string()).dump());
  }
  return config::load(c.config, sets, {load_model});
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + p.string());
  return f;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("not a number in list: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

void print_summary(const sim::Summary& s) {
  std::printf("cycle            %s\n", s.cycle.c_str());
  std::printf("distance         %.3f km\n", s.distance);
  std::printf("fc_gasoline      %.3f L/100km\n", s.fc_gasoline);
  std::printf("fc_elect         %.3f L/100km\n", s.fc_elect);
  std::printf("fc_total         %.3f L/100km\n", s.fc_total);
  std::printf("soc              %.2f -> %.2f %%\n", s.init_soc, s.final_soc);
  std::printf("energy split     ICE %.1f %% / battery %.1f %%\n", s.energy_split_ice, s.energy_split_battery);
  std::printf("CO2              %.2f g/km\n", s.emissions_g_per_km[0]);
  std::printf("mode time        EV %.0f  Series %.0f  Parallel %.0f  ICE %.0f s\n", s.mode_time[0],
              s.mode_time[1], s.mode_time[2], s.mode_time[3]);
  std::printf("ledger residual  %.4f %%\n", 100.0 * s.ledger.relative_residual());
  if (s.saturated_steps > 0) std::printf("saturated steps  %d\n", s.saturated_steps);
}

int cmd_simulate(const Common& c, const std::string& cycle_path, std::optional<double> init_soc,
                 std::optional<double> soh, const std::string& mode) {
  Common cc = c;
  if (!cycle_path.empty()) cc.sets.push_back("scenario.cycle=" + json(fs::absolute(cycle_path).string()).dump());
  if (init_soc) cc.sets.push_back("scenario.init_soc=" + json(*init_soc).dump());
  if (soh) cc.sets.push_back("scenario.soh=" + json(*soh).dump());
  if (!mode.empty()) cc.sets.push_back("scenario.forced_mode=" + json(mode).dump());
  const auto cfg = load_config(cc);
  const auto sc = config::make_scenario(cfg);
  const auto result = sim::run(sc);

  ensure_dir(c.out);
  {
    auto f = open_out(fs::path(c.out) / "trace.csv");
    sim::write_trace_csv(f, result.trace);
  }
  write_json(fs::path(c.out) / "summary.json", result.summary);
  print_summary(result.summary);

  const double steps = static_cast<double>(std::max<std::size_t>(result.trace.size(), 1));
  if (result.summary.saturated_steps / steps > cfg.saturation_limit) {
    std::fprintf(stderr, "error: %d of %zu steps saturated (limit %.1f %%)\n", result.summary.saturated_steps,
                 result.trace.size(), 100.0 * cfg.saturation_limit);
    return kExitSaturated;
  }
  return kExitOk;
}

int cmd_stats(const std::string& path, std::optional<double> threshold, const std::string& out) {
  const auto cyc = cycle::load_cycle(path);
  const auto st = cycle::stats(cyc, threshold.value_or(cycle::kDefaultStopThreshold));
  const json j = st;
  std::cout << j.dump(2) << '\n';
  if (!out.empty()) write_json(out, j);
  return kExitOk;
}

int cmd_synth(int preset, const std::string& spec_path, std::optional<std::uint64_t> seed, const std::string& out) {
  cycle::SynthSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open spec file: " + spec_path);
    const json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("spec file is not valid JSON: " + spec_path);
    try {
      spec = j.get<cycle::SynthSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid spec: ") + e.what());
    }
  } else {
    spec = cycle::tehran_preset(preset, 1);
  }
  if (seed) spec.seed = *seed;
  const auto cyc = cycle::synthesize(spec);
  const fs::path target = out.empty() ? fs::path(spec.name + ".csv") : fs::path(out);
  if (target.has_parent_path()) ensure_dir(target.parent_path().string());
  cycle::save_cycle(target.string(), cyc);
  const json st = cycle::stats(cyc);
  std::cout << st.dump(2) << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& model_out) {
  Common cc = c;
  cc.seed.reset();
  if (c.seed) cc.sets.push_back("predictor.seed=" + std::to_string(*c.seed));
  const auto cfg = load_config(cc, false);
  const auto run = config::train_soc_predictor(cfg);
  const std::string target =
      !model_out.empty() ? model_out : (fs::path(c.out) / "soc_predictor.json").string();
  if (fs::path(target).has_parent_path()) ensure_dir(fs::path(target).parent_path().string());
  predictor::save_model(target, run.model);
  std::printf("rows        %zu train / %zu test\n", run.model.rows_train, run.model.rows_test);
  std::printf("epochs      %d\n", run.model.epochs_run);
  std::printf("final loss  %.6g\n", run.model.final_loss);
  std::printf("R2          train %.4f / test %.4f\n", run.model.r2_train, run.model.r2_test);
  std::printf("model       %s\n", target.c_str());
  return kExitOk;
}

int cmd_sweep(const Common& c, const std::string& socs, const std::string& sohs, const std::string& speeds,
              double duration) {
  const int chosen = !socs.empty() + !sohs.empty() + !speeds.empty();
  if (chosen != 1) throw ConfigError("sweep needs exactly one of --init-soc, --soh, --speeds");
  const auto cfg = load_config(c);

  std::string axis;
  std::vector<double> values;
  std::vector<sim::Summary> rows;
  if (!speeds.empty()) {
    axis = "speed_kmh";
    values = parse_list(speeds);
    sim::ScenarioConfig base = config::make_scenario(cfg, cycle::constant_speed(50.0, duration));
    rows = sim::sweep_constant_speed(values, base, duration);
  } else {
    const auto base = config::make_scenario(cfg);
    if (!socs.empty()) {
      axis = "init_soc";
      values = parse_list(socs);
      rows = sim::sweep_init_soc(values, base);
    } else {
      axis = "soh";
      values = parse_list(sohs);
      rows = sim::sweep_soh(values, base);
    }
  }

  ensure_dir(c.out);
  json all = json::array();
  auto csv = open_out(fs::path(c.out) / "sweep.csv");
  csv << axis << ",distance_km,fc_gasoline,fc_elect,fc_total,delta_soc,energy_split_ice,co2_g_per_km\n";
  std::printf("%10s %10s %10s %10s %10s %10s %8s\n", axis.c_str(), "dist km", "fc_gas", "fc_elect", "fc_total",
              "dSOC %", "ICE %");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    json j = s;
    j[axis] = values[i];
    all.push_back(j);
    csv << json(values[i]).dump() << ',' << json(s.distance).dump() << ',' << json(s.fc_gasoline).dump() << ','
        << json(s.fc_elect).dump() << ',' << json(s.fc_total).dump() << ',' << json(s.delta_soc).dump() << ','
        << json(s.energy_split_ice).dump() << ',' << json(s.emissions_g_per_km[0]).dump() << '\n';
    std::printf("%10g %10.3f %10.3f %10.3f %10.3f %10.2f %8.1f\n", values[i], s.distance, s.fc_gasoline,
                s.fc_elect, s.fc_total, s.delta_soc, s.energy_split_ice);
  }
  write_json(fs::path(c.out) / "sweep.json", all);
  return kExitOk;
}

int cmd_range(const Common& c, std::optional<double> init_soc) {
  const auto cfg = load_config(c);
  auto sc = config::make_scenario(cfg);
  sc.init_soc = init_soc.value_or(cfg.models.pack.soc_ceiling);
  const double km = sim::ev_range(sc);
  std::printf("%.3f\n", km);
  return kExitOk;
}

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  if (with_out) app->add_option("--out", c.out, "Output directory");
  app->add_option("--seed", c.seed, "Seed override");
  app->add_option("--set", c.sets, "Override a configuration leaf, e.g. battery.pack.soc_floor=25")
      ->allow_extra_args(false);
  app->add_option("--stop-threshold", c.stop_threshold, "Stop speed threshold in km/h");
  app->add_option("--rulebase", c.rulebase, "Fuzzy rule base JSON file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plug-in hybrid vehicle simulator"};
  app.require_subcommand(1);

  Common common;
  common.config = default_config_path();

  auto* simulate = app.add_subcommand("simulate", "Run one scenario and write trace.csv and summary.json");
  add_common(simulate, common);
  std::string cycle_path, mode;
  std::optional<double> init_soc, soh;
  simulate->add_option("--cycle", cycle_path, "Cycle CSV (t,v[,grade])");
  simulate->add_option("--init-soc", init_soc, "Initial SOC in %");
  simulate->add_option("--soh", soh, "State of health in %");
  simulate->add_option("--mode", mode, "Force one mode: EV, Series, Parallel or ICE");

  auto* stats = app.add_subcommand("stats", "Print cycle statistics as JSON");
  std::string stats_path, stats_out;
  std::optional<double> stats_threshold;
  stats->add_option("cycle", stats_path, "Cycle CSV")->required();
  stats->add_option("--stop-threshold", stats_threshold, "Stop speed threshold in km/h");
  stats->add_option("--out", stats_out, "Also write the JSON to this file");

  auto* synth = app.add_subcommand("synth", "Synthesize a cycle from a statistics spec");
  int preset = 1;
  std::string spec_path, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--preset", preset, "Tehran replica index 1..6")->check(CLI::Range(1, 6));
  synth->add_option("--spec", spec_path, "Spec JSON (total_time, avg_speed, max_speed, num_stops, stop_time)");
  synth->add_option("--seed", synth_seed, "Profile seed");
  synth->add_option("--out", synth_out, "Output CSV path");

  auto* train = app.add_subcommand("train", "Fit the SOC consumption predictor");
  add_common(train, common);
  std::string model_out;
  train->add_option("--model-out", model_out, "Model JSON path (default OUT/soc_predictor.json)");

  auto* sweep = app.add_subcommand("sweep", "Compare scenarios along one axis");
  add_common(sweep, common);
  std::string socs, sohs, speeds;
  double duration = 600.0;
  sweep->add_option("--init-soc", socs, "Comma-separated initial SOC values");
  sweep->add_option("--soh", sohs, "Comma-separated state-of-health values");
  sweep->add_option("--speeds", speeds, "Comma-separated constant speeds in km/h");
  sweep->add_option("--duration", duration, "Constant-speed run length in s");

  auto* range = app.add_subcommand("range", "Electric-only range on the repeated cycle");
  add_common(range, common, false);
  std::optional<double> range_soc;
  range->add_option("--init-soc", range_soc, "Starting SOC (default: pack ceiling)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) return cmd_simulate(common, cycle_path, init_soc, soh, mode);
    if (*stats) return cmd_stats(stats_path, stats_threshold, stats_out);
    if (*synth) return cmd_synth(preset, spec_path, synth_seed, synth_out);
    if (*train) return cmd_train(common, model_out);
    if (*sweep) return cmd_sweep(common, socs, sohs, speeds, duration);
    if (*range) return cmd_range(common, range_soc);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
