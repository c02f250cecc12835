#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phev/error.hpp"

namespace phev::cycle {

enum class CycleErrorKind {
  MalformedRow,
  NonMonotoneTime,
  NegativeSpeed,
  TooShort,
  NonZeroStart,
  InvalidArgument,
  InfeasibleSpec,
};

class CycleError : public KindedError<CycleErrorKind> {
 public:
  CycleError(CycleErrorKind kind, std::string message, std::size_t line = 0)
      : KindedError(kind, std::move(message)), line_(line) {}
  /// 1-based source line for parse errors, 0 otherwise.
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct Sample {
  double t = 0.0;      // s
  double v = 0.0;      // km/h
  double grade = 0.0;  // percent

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Time-indexed speed trace, validated on construction. Time starts at 0 and
/// strictly increases over at least two samples; speeds are finite and
/// nonnegative.
class DrivingCycle {
 public:
  DrivingCycle(std::vector<Sample> samples, std::string name);

  [[nodiscard]] std::span<const Sample> samples() const noexcept { return samples_; }
  [[nodiscard]] const std::string& name() const noexcept { return name_; }
  [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
  [[nodiscard]] double duration() const noexcept { return samples_.back().t; }
  /// Median sample spacing.
  [[nodiscard]] double dt_nominal() const noexcept { return dt_nominal_; }
  [[nodiscard]] bool has_grade() const noexcept;

  /// Speed (km/h) and grade (%) at an arbitrary time by linear interpolation;
  /// clamps outside [0, duration].
  [[nodiscard]] Sample at(double t) const;

  /// Sub-trace over [t0, t1], re-based so it starts at t = 0.
  [[nodiscard]] DrivingCycle window(double t0, double t1) const;

  friend bool operator==(const DrivingCycle& a, const DrivingCycle& b) {
    return a.samples_ == b.samples_;
  }

 private:
  std::vector<Sample> samples_;
  std::string name_;
  double dt_nominal_ = 1.0;
};

struct CycleStats {
  double total_distance = 0.0;  // m
  double total_time = 0.0;      // s
  double driving_time = 0.0;    // s
  double stop_time = 0.0;       // s
  double avg_speed = 0.0;       // km/h
  double max_speed = 0.0;       // km/h
  int num_stops = 0;
};

inline constexpr double kDefaultStopThreshold = 0.1;  // km/h

/// Reads the `t,v[,grade]` CSV format (s, km/h, %).
DrivingCycle parse_cycle(std::istream& in, std::string name = "cycle");
DrivingCycle load_cycle(const std::string& path);

/// Writes the same CSV format with shortest round-trip number formatting, so
/// parse_cycle(serialize_cycle(c)) reproduces c bit for bit.
void serialize_cycle(std::ostream& out, const DrivingCycle& cycle);
std::string serialize_cycle(const DrivingCycle& cycle);
void save_cycle(const std::string& path, const DrivingCycle& cycle);

/// Uniform grid of spacing dt by linear interpolation; the original end time
/// is kept even when it is not a multiple of dt.
DrivingCycle resample(const DrivingCycle& cycle, double dt);

/// An interval counts as stopped when both of its end speeds are at or below
/// the threshold. A stop is a maximal run of stopped intervals lasting at
/// least one second; a run that begins at t = 0 is idle, not a stop.
CycleStats stats(const DrivingCycle& cycle, double stop_threshold = kDefaultStopThreshold);

void to_json(nlohmann::json& j, const CycleStats& s);
void from_json(const nlohmann::json& j, CycleStats& s);

struct SynthSpec {
  double total_time = 0.0;  // s
  double avg_speed = 0.0;   // km/h
  double max_speed = 0.0;   // km/h
  int num_stops = 0;
  double stop_time = 0.0;  // s
  std::uint64_t seed = 0;
  std::string name = "synthetic";
};

void to_json(nlohmann::json& j, const SynthSpec& s);
void from_json(const nlohmann::json& j, SynthSpec& s);

/// Seeded piecewise-trapezoidal speed profile. stats() of the result hits
/// total_time and num_stops exactly and the continuous targets closely.
/// Throws CycleError{InfeasibleSpec} when no profile satisfies the targets.
DrivingCycle synthesize(const SynthSpec& spec);

/// Replica specs for the six recorded urban routes (index 1..6). Distance is
/// derived as avg_speed * total_time.
SynthSpec tehran_preset(int index, std::uint64_t seed = 1);

/// Constant-speed cycle: accelerates from rest at `ramp_accel` (m/s^2), then
/// holds `speed_kmh` until `duration`.
DrivingCycle constant_speed(double speed_kmh, double duration, double ramp_accel = 1.0);

}  // namespace phev::cycle
