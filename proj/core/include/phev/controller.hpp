#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phev/drivetrain.hpp"

namespace phev::controller {

using drivetrain::Mode;

struct MembershipFunction {
  enum class Shape { Triangular, Trapezoidal };
  Shape shape = Shape::Triangular;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;  // unused for triangles

  static MembershipFunction triangular(double a, double b, double c);
  static MembershipFunction trapezoidal(double a, double b, double c, double d);

  void validate() const;
  /// Degree of membership in [0, 1]. Vertical shoulders (a == b or c == d)
  /// count as full membership at the breakpoint.
  [[nodiscard]] double operator()(double x) const noexcept;
};

struct Term {
  std::string name;
  MembershipFunction mf;
};

struct LinguisticVariable {
  std::string name;
  std::string unit;
  double min = 0.0;
  double max = 1.0;
  std::vector<Term> terms;

  [[nodiscard]] std::optional<std::size_t> term_index(const std::string& term) const;
};

struct Antecedent {
  std::string variable;
  std::string term;
};

struct FuzzyRule {
  std::vector<Antecedent> antecedents;
  Mode consequent = Mode::EV;
  double weight = 1.0;
};

/// Controller inputs. Speed in km/h, SOC values in %, p_req in kW.
struct Inputs {
  double speed = 0.0;
  double soc = 0.0;
  double soc_pred = 0.0;
  double p_req = 0.0;
};

inline constexpr std::array<const char*, 4> kInputNames = {"speed", "soc", "soc_pred", "p_req"};
inline constexpr std::size_t kRuleCount = 30;

struct ControllerConfig {
  std::vector<LinguisticVariable> variables;  // speed, soc, soc_pred, p_req in that order
  std::vector<FuzzyRule> rules;
  double hysteresis_margin = 0.05;
  double min_dwell = 2.0;      // s
  double soc_ceiling = 100.0;  // regen override applies below this SOC

  /// Throws ConfigError unless the rule base is structurally sound: the four
  /// variables in order, exactly 30 rules referencing known terms, distinct
  /// variables per rule, weights in (0, 1], every mode used.
  void validate() const;
};

using Activations = std::array<double, drivetrain::kModeCount>;

std::vector<double> fuzzify(double value, const LinguisticVariable& var);
Activations evaluate(const ControllerConfig& cfg, const Inputs& in);

/// Argmax with preference EV > Series > Parallel > ICE on ties.
Mode argmax(const Activations& act) noexcept;

/// Mode decision with switching discipline. Without a previous mode the
/// argmax is returned. Braking below the SOC ceiling targets EV regardless
/// of activations; every switch still honors the minimum dwell.
Mode decide(const Activations& act, std::optional<Mode> prev, double time_in_mode,
            const ControllerConfig& cfg, const Inputs& in);

/// Carries (previous mode, entry time) across steps.
class Supervisor {
 public:
  explicit Supervisor(const ControllerConfig& cfg) : cfg_(&cfg) {}
  Mode step(const Inputs& in, double t);
  [[nodiscard]] std::optional<Mode> mode() const noexcept { return mode_; }
  [[nodiscard]] const Activations& last_activations() const noexcept { return last_; }

 private:
  const ControllerConfig* cfg_;
  std::optional<Mode> mode_;
  double entered_ = 0.0;
  Activations last_{};
};

ControllerConfig default_rulebase();

void to_json(nlohmann::json& j, const ControllerConfig& cfg);
void from_json(const nlohmann::json& j, ControllerConfig& cfg);
ControllerConfig load_rulebase(const std::string& path);

}  // namespace phev::controller
