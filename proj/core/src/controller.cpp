#include "phev/controller.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace phev::controller {

MembershipFunction MembershipFunction::triangular(double a, double b, double c) {
  return {Shape::Triangular, a, b, c, c};
}

MembershipFunction MembershipFunction::trapezoidal(double a, double b, double c, double d) {
  return {Shape::Trapezoidal, a, b, c, d};
}

void MembershipFunction::validate() const {
  const bool ordered = shape == Shape::Triangular ? (a <= b && b <= c) : (a <= b && b <= c && c <= d);
  if (!ordered) throw ConfigError("membership breakpoints must be nondecreasing");
}

double MembershipFunction::operator()(double x) const noexcept {
  const double top_lo = b;
  const double top_hi = shape == Shape::Triangular ? b : c;
  const double right = shape == Shape::Triangular ? c : d;
  if (x >= top_lo && x <= top_hi) return 1.0;
  if (x < top_lo) return x <= a ? 0.0 : (x - a) / (top_lo - a);
  return x >= right ? 0.0 : (right - x) / (right - top_hi);
}

std::optional<std::size_t> LinguisticVariable::term_index(const std::string& term) const {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].name == term) return i;
  }
  return std::nullopt;
}

namespace {

const LinguisticVariable* find_variable(const ControllerConfig& cfg, const std::string& name) {
  for (const auto& v : cfg.variables) {
    if (v.name == name) return &v;
  }
  return nullptr;
}

double input_value(const Inputs& in, std::size_t index) {
  switch (index) {
    case 0: return in.speed;
    case 1: return in.soc;
    case 2: return in.soc_pred;
    default: return in.p_req;
  }
}

}  // namespace

void ControllerConfig::validate() const {
  if (variables.size() != kInputNames.size()) throw ConfigError("controller needs exactly four variables");
  for (std::size_t i = 0; i < variables.size(); ++i) {
    const auto& v = variables[i];
    if (v.name != kInputNames[i]) {
      throw ConfigError(std::string("controller variable ") + std::to_string(i) + " must be '" +
                        kInputNames[i] + "'");
    }
    if (!(v.max > v.min)) throw ConfigError("variable '" + v.name + "' has an empty universe");
    if (v.terms.empty()) throw ConfigError("variable '" + v.name + "' has no terms");
    std::set<std::string> names;
    for (const auto& t : v.terms) {
      t.mf.validate();
      if (!names.insert(t.name).second) throw ConfigError("duplicate term '" + t.name + "' in " + v.name);
    }
  }
  if (rules.size() != kRuleCount) {
    throw ConfigError("rule base must contain exactly 30 rules, found " + std::to_string(rules.size()));
  }
  std::array<bool, drivetrain::kModeCount> used{};
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& rule = rules[r];
    const std::string where = "rule " + std::to_string(r + 1);
    if (rule.antecedents.empty()) throw ConfigError(where + " has no antecedents");
    if (!(rule.weight > 0.0 && rule.weight <= 1.0)) throw ConfigError(where + " weight must lie in (0, 1]");
    std::set<std::string> seen;
    for (const auto& a : rule.antecedents) {
      const auto* var = find_variable(*this, a.variable);
      if (var == nullptr) throw ConfigError(where + " references unknown variable '" + a.variable + "'");
      if (!var->term_index(a.term)) {
        throw ConfigError(where + " references unknown term '" + a.term + "' of " + a.variable);
      }
      if (!seen.insert(a.variable).second) throw ConfigError(where + " repeats variable " + a.variable);
    }
    used[static_cast<int>(rule.consequent)] = true;
  }
  for (int m = 0; m < drivetrain::kModeCount; ++m) {
    if (!used[m]) {
      throw ConfigError("mode " + drivetrain::to_string(static_cast<Mode>(m)) + " is never a consequent");
    }
  }
  if (hysteresis_margin < 0.0 || min_dwell < 0.0) throw ConfigError("hysteresis terms must be >= 0");
}

std::vector<double> fuzzify(double value, const LinguisticVariable& var) {
  const double x = std::clamp(value, var.min, var.max);
  std::vector<double> out;
  out.reserve(var.terms.size());
  for (const auto& t : var.terms) out.push_back(t.mf(x));
  return out;
}

Activations evaluate(const ControllerConfig& cfg, const Inputs& in) {
  std::array<std::vector<double>, 4> mu;
  for (std::size_t i = 0; i < cfg.variables.size() && i < mu.size(); ++i) {
    mu[i] = fuzzify(input_value(in, i), cfg.variables[i]);
  }
  Activations act{};
  for (const auto& rule : cfg.rules) {
    double strength = 1.0;
    for (const auto& a : rule.antecedents) {
      std::size_t vi = 0;
      while (vi < cfg.variables.size() && cfg.variables[vi].name != a.variable) ++vi;
      if (vi == cfg.variables.size()) {
        strength = 0.0;
        break;
      }
      const auto ti = cfg.variables[vi].term_index(a.term);
      strength = std::min(strength, ti ? mu[vi][*ti] : 0.0);
    }
    auto& slot = act[static_cast<int>(rule.consequent)];
    slot = std::max(slot, strength * rule.weight);
  }
  return act;
}

Mode argmax(const Activations& act) noexcept {
  int best = 0;
  for (int m = 1; m < drivetrain::kModeCount; ++m) {
    if (act[m] > act[best]) best = m;
  }
  return static_cast<Mode>(best);
}

Mode decide(const Activations& act, std::optional<Mode> prev, double time_in_mode,
            const ControllerConfig& cfg, const Inputs& in) {
  const bool regen = in.p_req < 0.0 && in.soc < cfg.soc_ceiling;
  const Mode target = regen ? Mode::EV : argmax(act);
  if (!prev || target == *prev) return target;
  if (time_in_mode < cfg.min_dwell) return *prev;
  if (regen) return target;
  const double gain = act[static_cast<int>(target)] - act[static_cast<int>(*prev)];
  return gain >= cfg.hysteresis_margin ? target : *prev;
}

Mode Supervisor::step(const Inputs& in, double t) {
  last_ = evaluate(*cfg_, in);
  const Mode next = decide(last_, mode_, mode_ ? t - entered_ : 0.0, *cfg_, in);
  if (!mode_ || next != *mode_) {
    mode_ = next;
    entered_ = t;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Default rule base

namespace {

using MF = MembershipFunction;

FuzzyRule rule(std::initializer_list<Antecedent> ants, Mode m, double w = 1.0) {
  return FuzzyRule{std::vector<Antecedent>(ants), m, w};
}

}  // namespace

ControllerConfig default_rulebase() {
  ControllerConfig cfg;
  cfg.variables = {
      {"speed", "km/h", 0.0, 160.0,
       {{"low", MF::trapezoidal(0, 0, 20, 40)},
        {"medium", MF::trapezoidal(20, 40, 60, 80)},
        {"high", MF::trapezoidal(60, 80, 110, 120)},
        {"highway", MF::trapezoidal(110, 120, 160, 160)}}},
      {"soc", "%", 0.0, 100.0,
       {{"low", MF::trapezoidal(0, 0, 20, 40)},
        {"medium", MF::trapezoidal(20, 40, 70, 90)},
        {"high", MF::trapezoidal(70, 90, 100, 100)}}},
      {"soc_pred", "%", 0.0, 100.0,
       {{"low", MF::trapezoidal(0, 0, 45, 60)},
        {"medium", MF::trapezoidal(45, 60, 75, 90)},
        {"high", MF::trapezoidal(75, 90, 100, 100)}}},
      {"p_req", "kW", -80.0, 120.0,
       {{"regen", MF::trapezoidal(-80, -80, -5, 0)},
        {"low", MF::trapezoidal(-5, 0, 15, 30)},
        {"medium", MF::triangular(20, 45, 75)},
        {"high", MF::trapezoidal(55, 80, 120, 120)}}},
  };

  const Mode EV = Mode::EV, SE = Mode::Series, PA = Mode::Parallel, IC = Mode::ICE;
  cfg.rules = {
      // Electric driving whenever charge allows.
      rule({{"speed", "low"}, {"soc", "high"}}, EV),
      rule({{"speed", "medium"}, {"soc", "high"}}, EV),
      rule({{"speed", "high"}, {"soc", "high"}, {"p_req", "low"}}, EV),
      rule({{"speed", "high"}, {"soc", "high"}, {"p_req", "medium"}}, EV),
      rule({{"speed", "low"}, {"soc", "medium"}, {"p_req", "low"}}, EV, 0.7),
      rule({{"speed", "medium"}, {"soc", "medium"}, {"p_req", "low"}}, EV, 0.7),
      rule({{"speed", "high"}, {"soc", "medium"}, {"p_req", "low"}}, EV, 0.7),
      rule({{"speed", "low"}, {"soc", "medium"}, {"p_req", "medium"}}, EV, 0.7),
      rule({{"speed", "medium"}, {"soc", "medium"}, {"p_req", "medium"}}, EV, 0.7),
      rule({{"speed", "high"}, {"soc", "medium"}, {"p_req", "medium"}}, EV, 0.6),
      // Depletion management from the predicted charge.
      rule({{"speed", "low"}, {"soc", "low"}, {"soc_pred", "low"}}, SE, 0.9),
      rule({{"speed", "medium"}, {"soc", "low"}, {"soc_pred", "low"}}, SE, 0.9),
      rule({{"speed", "high"}, {"soc", "low"}, {"soc_pred", "low"}}, IC, 0.9),
      rule({{"speed", "low"}, {"soc", "medium"}, {"soc_pred", "low"}}, SE, 0.9),
      rule({{"speed", "medium"}, {"soc", "medium"}, {"soc_pred", "low"}}, SE, 0.9),
      rule({{"speed", "high"}, {"soc", "medium"}, {"soc_pred", "low"}}, SE, 0.9),
      rule({{"speed", "medium"}, {"soc", "low"}, {"p_req", "medium"}}, PA, 0.9),
      rule({{"speed", "high"}, {"soc", "low"}, {"p_req", "medium"}}, IC, 0.9),
      // Highway operation.
      rule({{"speed", "highway"}, {"soc", "low"}}, SE),
      rule({{"speed", "highway"}, {"soc_pred", "low"}}, SE),
      rule({{"speed", "highway"}, {"p_req", "low"}}, SE),
      rule({{"speed", "highway"}, {"p_req", "medium"}}, PA),
      rule({{"speed", "highway"}, {"p_req", "high"}}, PA),
      // Demand beyond what the battery alone can deliver.
      rule({{"p_req", "high"}}, PA),
      rule({{"speed", "highway"}, {"soc", "high"}, {"p_req", "medium"}}, PA),
      // Braking recovers energy electrically.
      rule({{"p_req", "regen"}}, EV),
      rule({{"soc", "low"}, {"p_req", "regen"}}, EV),
      // Weak fallbacks keeping every input covered.
      rule({{"soc", "low"}}, SE, 0.1),
      rule({{"soc", "medium"}}, EV, 0.1),
      rule({{"soc", "high"}}, EV, 0.1),
  };
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::string shape_name(MembershipFunction::Shape s) {
  return s == MembershipFunction::Shape::Triangular ? "triangular" : "trapezoidal";
}

}  // namespace

void to_json(nlohmann::json& j, const ControllerConfig& cfg) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : cfg.variables) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : v.terms) {
      nlohmann::json pts = nlohmann::json::array({t.mf.a, t.mf.b, t.mf.c});
      if (t.mf.shape == MembershipFunction::Shape::Trapezoidal) pts.push_back(t.mf.d);
      terms.push_back({{"name", t.name}, {"shape", shape_name(t.mf.shape)}, {"points", pts}});
    }
    vars.push_back({{"name", v.name}, {"unit", v.unit}, {"min", v.min}, {"max", v.max}, {"terms", terms}});
  }
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : cfg.rules) {
    nlohmann::json ants = nlohmann::json::array();
    for (const auto& a : r.antecedents) ants.push_back({a.variable, a.term});
    rules.push_back({{"if", ants}, {"then", drivetrain::to_string(r.consequent)}, {"weight", r.weight}});
  }
  j = {{"hysteresis_margin", cfg.hysteresis_margin},
       {"min_dwell", cfg.min_dwell},
       {"soc_ceiling", cfg.soc_ceiling},
       {"variables", vars},
       {"rules", rules}};
}

void from_json(const nlohmann::json& j, ControllerConfig& cfg) {
  try {
    cfg = ControllerConfig{};
    cfg.hysteresis_margin = j.value("hysteresis_margin", 0.05);
    cfg.min_dwell = j.value("min_dwell", 2.0);
    cfg.soc_ceiling = j.value("soc_ceiling", 100.0);
    for (const auto& jv : j.at("variables")) {
      LinguisticVariable v;
      v.name = jv.at("name").get<std::string>();
      v.unit = jv.value("unit", "");
      v.min = jv.at("min").get<double>();
      v.max = jv.at("max").get<double>();
      for (const auto& jt : jv.at("terms")) {
        const auto shape = jt.at("shape").get<std::string>();
        const auto pts = jt.at("points").get<std::vector<double>>();
        Term t;
        t.name = jt.at("name").get<std::string>();
        if (shape == "triangular" && pts.size() == 3) {
          t.mf = MF::triangular(pts[0], pts[1], pts[2]);
        } else if (shape == "trapezoidal" && pts.size() == 4) {
          t.mf = MF::trapezoidal(pts[0], pts[1], pts[2], pts[3]);
        } else {
          throw ConfigError("term '" + t.name + "' needs 3 triangular or 4 trapezoidal points");
        }
        v.terms.push_back(std::move(t));
      }
      cfg.variables.push_back(std::move(v));
    }
    for (const auto& jr : j.at("rules")) {
      FuzzyRule r;
      for (const auto& ja : jr.at("if")) {
        r.antecedents.push_back({ja.at(0).get<std::string>(), ja.at(1).get<std::string>()});
      }
      const auto then = jr.at("then").get<std::string>();
      const auto mode = drivetrain::mode_from_string(then);
      if (!mode) throw ConfigError("unknown mode '" + then + "' in rule base");
      r.consequent = *mode;
      r.weight = jr.value("weight", 1.0);
      cfg.rules.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed rule base: ") + e.what());
  }
}

ControllerConfig load_rulebase(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rule base: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("rule base " + path + " is not valid JSON: " + e.what());
  }
  ControllerConfig cfg = j.get<ControllerConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace phev::controller
