#include "phev/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "rng.hpp"

namespace phev::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json machine_json(const drivetrain::MachineParams& m) {
  return {{"max_power", m.max_power}, {"max_torque", m.max_torque}, {"rated_power", m.rated_power},
          {"eta_peak", m.eta_peak},   {"p_opt", m.p_opt},           {"eta_c", m.eta_c},
          {"eta_min", m.eta_min}};
}

drivetrain::MachineParams machine_from(const json& j) {
  drivetrain::MachineParams m;
  m.max_power = j.at("max_power").get<double>();
  m.max_torque = j.at("max_torque").get<double>();
  m.rated_power = j.at("rated_power").get<double>();
  m.eta_peak = j.at("eta_peak").get<double>();
  m.p_opt = j.at("p_opt").get<double>();
  m.eta_c = j.at("eta_c").get<double>();
  m.eta_min = j.at("eta_min").get<double>();
  return m;
}

json surface_json(const engine::SpeciesSurface& s) {
  return {{"base", s.base}, {"low_load", s.low_load}, {"high_load", s.high_load}};
}

engine::SpeciesSurface surface_from(const json& j) {
  return {j.at("base").get<double>(), j.at("low_load").get<double>(), j.at("high_load").get<double>()};
}

json curve_json(const battery::Curve& c) {
  json a = json::array();
  for (const auto& [x, y] : c.points()) a.push_back({x, y});
  return a;
}

battery::Curve curve_from(const json& j) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : j) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return battery::Curve(std::move(pts));
}

const char* type_name(const json& j) { return j.type_name(); }

bool compatible(const json& old_v, const json& new_v) {
  if (old_v.is_null() || new_v.is_null()) return true;
  if (old_v.is_number() && new_v.is_number()) return true;
  return old_v.type() == new_v.type();
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = fs::path(base_dir) / path;
  return path.lexically_normal().string();
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

}  // namespace

json default_document() {
  const sim::Models m;
  const auto& v = m.vehicle;
  const auto& e = m.engine;
  const auto& c = m.cell;
  const auto& p = m.pack;
  const auto& d = m.drivetrain;
  const predictor::Hyper h;
  json rc = json::array();
  for (const auto& b : c.rc) rc.push_back({{"r", b.r}, {"c", b.c}});
  return {
      {"vehicle",
       {{"mass", v.mass},
        {"load", v.load},
        {"frontal_area", v.frontal_area},
        {"drag_coeff", v.drag_coeff},
        {"roll_f", v.roll_f},
        {"roll_k", v.roll_k},
        {"roll_w", v.roll_w},
        {"coeff_a", v.coeff_a},
        {"coeff_b", v.coeff_b},
        {"coeff_c", v.coeff_c},
        {"equiv_mass_factor", v.equiv_mass_factor},
        {"road_load_form", "physical"}}},
      {"environment",
       {{"air_density", m.environment.air_density},
        {"gravity", m.environment.gravity},
        {"wind_speed", m.environment.wind_speed},
        {"ambient_temp", m.environment.ambient_temp}}},
      {"engine",
       {{"max_power", e.max_power},
        {"displacement", e.displacement},
        {"bsfc_min", e.bsfc_min},
        {"u_opt", e.u_opt},
        {"c_lo", e.c_lo},
        {"c_hi", e.c_hi},
        {"min_load_fraction", e.min_load_fraction},
        {"bsfc_table", ""},
        {"fuel",
         {{"lower_heating_value", m.fuel.lower_heating_value},
          {"density", m.fuel.density},
          {"co2_per_gram_fuel", m.fuel.co2_per_gram_fuel}}},
        {"emissions",
         {{"co", surface_json(m.emissions.co)},
          {"hc", surface_json(m.emissions.hc)},
          {"nox", surface_json(m.emissions.nox)},
          {"cold_multiplier", m.emissions.cold_multiplier},
          {"warmup_time", m.emissions.warmup_time},
          {"scale", m.emissions.scale}}}}},
      {"battery",
       {{"cell",
         {{"q_rated", c.q_rated},
          {"ocv", curve_json(c.ocv)},
          {"ocv_csv", ""},
          {"ocv_eq", json::array()},
          {"r_ohm", c.r_ohm},
          {"r_ct", c.r_ct},
          {"rc", rc},
          {"du_dt", c.du_dt},
          {"eta_farad", c.eta_farad},
          {"max_discharge_c", c.max_discharge_c},
          {"max_charge_c", c.max_charge_c}}},
        {"pack",
         {{"n_series", p.n_series},
          {"n_parallel", p.n_parallel},
          {"r_add", p.r_add},
          {"soc_floor", p.soc_floor},
          {"soc_ceiling", p.soc_ceiling},
          {"nominal_energy", p.nominal_energy},
          {"resistance_eol_ratio", p.resistance_eol_ratio},
          {"thermal", {{"c_th", p.thermal.c_th}, {"h_a", p.thermal.h_a}}}}}}},
      {"drivetrain",
       {{"front", machine_json(d.front)},
        {"rear", machine_json(d.rear)},
        {"generator", machine_json(d.generator)},
        {"driveline_efficiency", d.driveline_efficiency},
        {"aux_power", d.aux_power},
        {"soc_target", d.soc_target},
        {"charge_gain", d.charge_gain},
        {"max_charge_request", d.max_charge_request},
        {"regen_min_speed", d.regen_min_speed},
        {"regen_fraction", d.regen_fraction}}},
      {"controller",
       {{"rulebase", ""}, {"hysteresis_margin", nullptr}, {"min_dwell", nullptr}}},
      {"predictor",
       {{"model", ""},
        {"horizon", m.predictor_horizon},
        {"hidden", h.hidden},
        {"learning_rate", h.learning_rate},
        {"epochs", h.epochs},
        {"l2", h.l2},
        {"seed", h.seed},
        {"step_growth", h.step_growth},
        {"train_fraction", 0.8},
        {"dataset_seed", 7},
        {"reference_soc", 90.0},
        {"synthetic_count", 12},
        {"synthetic_seed", 100}}},
      {"scenario",
       {{"cycle", ""},
        {"init_soc", 90.0},
        {"soh", 100.0},
        {"dt", 1.0},
        {"ambient", nullptr},
        {"forced_mode", ""},
        {"seed", 1},
        {"stop_threshold", cycle::kDefaultStopThreshold},
        {"saturation_limit", 0.05}}},
  };
}

void merge_strict(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("expected an object at '" + (where.empty() ? "<root>" : where) + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it->is_object()) {
      merge_strict(slot, *it, path);
    } else if (compatible(slot, *it)) {
      slot = *it;
    } else {
      throw ConfigError("configuration key '" + path + "' expects " + type_name(slot) + ", got " +
                        type_name(*it));
    }
  }
}

void apply_assignment(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must have the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + key + "' has an empty segment");
    patch = json{{*it, patch}};
  }
  merge_strict(doc, patch);
}

AppConfig from_document(const json& doc, const std::string& base_dir, LoadOptions opts) {
  AppConfig cfg;
  cfg.resolved = doc;
  try {
    auto& m = cfg.models;
    const auto& jv = doc.at("vehicle");
    m.vehicle.mass = jv.at("mass").get<double>();
    m.vehicle.load = jv.at("load").get<double>();
    m.vehicle.frontal_area = jv.at("frontal_area").get<double>();
    m.vehicle.drag_coeff = jv.at("drag_coeff").get<double>();
    m.vehicle.roll_f = jv.at("roll_f").get<double>();
    m.vehicle.roll_k = jv.at("roll_k").get<double>();
    m.vehicle.roll_w = jv.at("roll_w").get<double>();
    m.vehicle.coeff_a = jv.at("coeff_a").get<double>();
    m.vehicle.coeff_b = jv.at("coeff_b").get<double>();
    m.vehicle.coeff_c = jv.at("coeff_c").get<double>();
    m.vehicle.equiv_mass_factor = jv.at("equiv_mass_factor").get<double>();
    const auto form = jv.at("road_load_form").get<std::string>();
    if (form == "physical") {
      m.vehicle.form = dynamics::RoadLoadForm::Physical;
    } else if (form == "coefficient") {
      m.vehicle.form = dynamics::RoadLoadForm::Coefficient;
    } else {
      throw ConfigError("vehicle.road_load_form must be 'physical' or 'coefficient'");
    }

    const auto& je = doc.at("environment");
    m.environment.air_density = je.at("air_density").get<double>();
    m.environment.gravity = je.at("gravity").get<double>();
    m.environment.wind_speed = je.at("wind_speed").get<double>();
    m.environment.ambient_temp = je.at("ambient_temp").get<double>();

    const auto& jg = doc.at("engine");
    m.engine.max_power = jg.at("max_power").get<double>();
    m.engine.displacement = jg.at("displacement").get<double>();
    m.engine.bsfc_min = jg.at("bsfc_min").get<double>();
    m.engine.u_opt = jg.at("u_opt").get<double>();
    m.engine.c_lo = jg.at("c_lo").get<double>();
    m.engine.c_hi = jg.at("c_hi").get<double>();
    m.engine.min_load_fraction = jg.at("min_load_fraction").get<double>();
    const auto& jf = jg.at("fuel");
    m.fuel.lower_heating_value = jf.at("lower_heating_value").get<double>();
    m.fuel.density = jf.at("density").get<double>();
    m.fuel.co2_per_gram_fuel = jf.at("co2_per_gram_fuel").get<double>();
    const auto& jm = jg.at("emissions");
    m.emissions.co = surface_from(jm.at("co"));
    m.emissions.hc = surface_from(jm.at("hc"));
    m.emissions.nox = surface_from(jm.at("nox"));
    m.emissions.cold_multiplier = jm.at("cold_multiplier").get<double>();
    m.emissions.warmup_time = jm.at("warmup_time").get<double>();
    m.emissions.scale = jm.at("scale").get<double>();
    if (const auto table = resolve_path(jg.at("bsfc_table").get<std::string>(), base_dir); !table.empty()) {
      engine::load_bsfc_table(m.engine, table);
    }

    const auto& jc = doc.at("battery").at("cell");
    m.cell.q_rated = jc.at("q_rated").get<double>();
    m.cell.ocv = curve_from(jc.at("ocv"));
    if (const auto csv = resolve_path(jc.at("ocv_csv").get<std::string>(), base_dir); !csv.empty()) {
      m.cell.ocv = battery::load_ocv_csv(csv);
    }
    m.cell.ocv_eq = curve_from(jc.at("ocv_eq"));
    m.cell.r_ohm = jc.at("r_ohm").get<double>();
    m.cell.r_ct = jc.at("r_ct").get<double>();
    m.cell.rc.clear();
    for (const auto& b : jc.at("rc")) m.cell.rc.push_back({b.at("r").get<double>(), b.at("c").get<double>()});
    m.cell.du_dt = jc.at("du_dt").get<double>();
    m.cell.eta_farad = jc.at("eta_farad").get<double>();
    m.cell.max_discharge_c = jc.at("max_discharge_c").get<double>();
    m.cell.max_charge_c = jc.at("max_charge_c").get<double>();
    const auto& jp = doc.at("battery").at("pack");
    m.pack.n_series = jp.at("n_series").get<int>();
    m.pack.n_parallel = jp.at("n_parallel").get<int>();
    m.pack.r_add = jp.at("r_add").get<double>();
    m.pack.soc_floor = jp.at("soc_floor").get<double>();
    m.pack.soc_ceiling = jp.at("soc_ceiling").get<double>();
    m.pack.nominal_energy = jp.at("nominal_energy").get<double>();
    m.pack.resistance_eol_ratio = jp.at("resistance_eol_ratio").get<double>();
    m.pack.thermal.c_th = jp.at("thermal").at("c_th").get<double>();
    m.pack.thermal.h_a = jp.at("thermal").at("h_a").get<double>();

    const auto& jd = doc.at("drivetrain");
    m.drivetrain.front = machine_from(jd.at("front"));
    m.drivetrain.rear = machine_from(jd.at("rear"));
    m.drivetrain.generator = machine_from(jd.at("generator"));
    m.drivetrain.driveline_efficiency = jd.at("driveline_efficiency").get<double>();
    m.drivetrain.aux_power = jd.at("aux_power").get<double>();
    m.drivetrain.soc_target = jd.at("soc_target").get<double>();
    m.drivetrain.charge_gain = jd.at("charge_gain").get<double>();
    m.drivetrain.max_charge_request = jd.at("max_charge_request").get<double>();
    m.drivetrain.regen_min_speed = jd.at("regen_min_speed").get<double>();
    m.drivetrain.regen_fraction = jd.at("regen_fraction").get<double>();

    const auto& jk = doc.at("controller");
    cfg.rulebase_path = resolve_path(jk.at("rulebase").get<std::string>(), base_dir);
    if (!cfg.rulebase_path.empty()) {
      require_file(cfg.rulebase_path, "rule base");
      m.controller = controller::load_rulebase(cfg.rulebase_path);
    }
    if (!jk.at("hysteresis_margin").is_null()) m.controller.hysteresis_margin = jk["hysteresis_margin"].get<double>();
    if (!jk.at("min_dwell").is_null()) m.controller.min_dwell = jk["min_dwell"].get<double>();
    m.controller.soc_ceiling = m.pack.soc_ceiling;

    const auto& jr = doc.at("predictor");
    m.predictor_horizon = jr.at("horizon").get<double>();
    cfg.hyper.hidden = jr.at("hidden").get<int>();
    cfg.hyper.learning_rate = jr.at("learning_rate").get<double>();
    cfg.hyper.epochs = jr.at("epochs").get<int>();
    cfg.hyper.l2 = jr.at("l2").get<double>();
    cfg.hyper.seed = jr.at("seed").get<std::uint64_t>();
    cfg.hyper.step_growth = jr.at("step_growth").get<double>();
    cfg.train_fraction = jr.at("train_fraction").get<double>();
    cfg.dataset_seed = jr.at("dataset_seed").get<std::uint64_t>();
    cfg.reference_soc = jr.at("reference_soc").get<double>();
    cfg.synthetic_count = jr.at("synthetic_count").get<int>();
    cfg.synthetic_seed = jr.at("synthetic_seed").get<std::uint64_t>();
    cfg.model_path = resolve_path(jr.at("model").get<std::string>(), base_dir);
    if (opts.load_model && !cfg.model_path.empty()) {
      require_file(cfg.model_path, "predictor model");
      m.soc_model = std::make_shared<const predictor::RegressionModel>(predictor::load_model(cfg.model_path));
    }

    const auto& js = doc.at("scenario");
    cfg.cycle_path = resolve_path(js.at("cycle").get<std::string>(), base_dir);
    cfg.init_soc = js.at("init_soc").get<double>();
    cfg.soh = js.at("soh").get<double>();
    cfg.dt = js.at("dt").get<double>();
    if (!js.at("ambient").is_null()) cfg.ambient = js["ambient"].get<double>();
    const auto forced = js.at("forced_mode").get<std::string>();
    if (!forced.empty()) {
      cfg.forced_mode = drivetrain::mode_from_string(forced);
      if (!cfg.forced_mode) throw ConfigError("scenario.forced_mode '" + forced + "' is not a mode");
    }
    cfg.seed = js.at("seed").get<std::uint64_t>();
    cfg.stop_threshold = js.at("stop_threshold").get<double>();
    cfg.saturation_limit = js.at("saturation_limit").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  } catch (const battery::BatteryError& e) {
    throw ConfigError(std::string("invalid battery curve: ") + e.what());
  }
  cfg.models.validate();
  return cfg;
}

AppConfig load(const std::string& path, const std::vector<std::string>& assignments, LoadOptions opts) {
  json doc = default_document();
  std::string base_dir;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open configuration file: " + path);
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("configuration file is not valid JSON: " + path);
    merge_strict(doc, user);
    base_dir = fs::absolute(fs::path(path)).parent_path().string();
  }
  for (const auto& a : assignments) apply_assignment(doc, a);
  AppConfig cfg = from_document(doc, base_dir, opts);
  cfg.source = path;
  return cfg;
}

sim::ScenarioConfig make_scenario(const AppConfig& cfg, cycle::DrivingCycle c) {
  sim::ScenarioConfig sc{cfg.models, std::move(c)};
  sc.init_soc = cfg.init_soc;
  sc.soh = cfg.soh;
  sc.ambient = cfg.ambient;
  sc.dt = cfg.dt;
  sc.forced_mode = cfg.forced_mode;
  sc.seed = cfg.seed;
  return sc;
}

sim::ScenarioConfig make_scenario(const AppConfig& cfg) {
  if (cfg.cycle_path.empty()) throw ConfigError("scenario.cycle is not set");
  require_file(cfg.cycle_path, "cycle file");
  return make_scenario(cfg, cycle::load_cycle(cfg.cycle_path));
}

std::vector<cycle::DrivingCycle> training_corpus(const AppConfig& cfg) {
  std::vector<cycle::DrivingCycle> out;
  if (!cfg.cycle_path.empty()) {
    require_file(cfg.cycle_path, "cycle file");
    out.push_back(cycle::load_cycle(cfg.cycle_path));
  }
  for (int i = 1; i <= 6; ++i) out.push_back(cycle::synthesize(cycle::tehran_preset(i, cfg.synthetic_seed + i)));

  detail::Rng rng(cfg.synthetic_seed);
  int made = 0;
  for (int attempt = 0; made < cfg.synthetic_count && attempt < 20 * cfg.synthetic_count + 20; ++attempt) {
    cycle::SynthSpec s;
    s.total_time = std::round(rng.uniform(900.0, 2400.0));
    s.avg_speed = rng.uniform(10.0, 60.0);
    s.max_speed = std::min(135.0, s.avg_speed * rng.uniform(1.7, 2.6));
    s.num_stops = static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(std::max(1.0, s.total_time / 150.0))));
    s.stop_time = std::round(s.total_time * rng.uniform(0.05, 0.25));
    s.seed = cfg.synthetic_seed * 1000 + static_cast<std::uint64_t>(attempt);
    s.name = "synthetic" + std::to_string(made + 1);
    try {
      out.push_back(cycle::synthesize(s));
      ++made;
    } catch (const cycle::CycleError&) {
      // infeasible draw; take the next one
    }
  }
  return out;
}

TrainingRun train_soc_predictor(const AppConfig& cfg) {
  const auto corpus = training_corpus(cfg);
  sim::Models models = cfg.models;
  models.soc_model.reset();
  const double ref = cfg.reference_soc;
  TrainingRun r;
  r.dataset = predictor::build_dataset(
      corpus, models.predictor_horizon,
      [&models, ref](const cycle::DrivingCycle& w) { return sim::ev_soc_consumption(w, models, ref); },
      cfg.dataset_seed, cfg.train_fraction);
  r.model = predictor::train(r.dataset, cfg.hyper);
  return r;
}

}  // namespace phev::config
