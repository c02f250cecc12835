#include "phev/cycle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "numfmt.hpp"

namespace phev::cycle {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view field, double& out) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

std::string where(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

void validate(const std::vector<Sample>& samples, const std::vector<std::size_t>* lines) {
  auto line_of = [&](std::size_t i) -> std::size_t { return lines ? (*lines)[i] : 0; };
  if (samples.size() < 2) {
    throw CycleError(CycleErrorKind::TooShort, "driving cycle needs at least 2 samples");
  }
  if (samples.front().t != 0.0) {
    throw CycleError(CycleErrorKind::NonZeroStart, "driving cycle must start at t = 0",
                     line_of(0));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (!std::isfinite(s.t) || !std::isfinite(s.v) || !std::isfinite(s.grade)) {
      throw CycleError(CycleErrorKind::MalformedRow, "non-finite value" + where(line_of(i)),
                       line_of(i));
    }
    if (s.v < 0.0) {
      throw CycleError(CycleErrorKind::NegativeSpeed, "negative speed" + where(line_of(i)),
                       line_of(i));
    }
    if (i > 0 && !(s.t > samples[i - 1].t)) {
      throw CycleError(CycleErrorKind::NonMonotoneTime,
                       "time must strictly increase" + where(line_of(i)), line_of(i));
    }
  }
}

double median_spacing(const std::vector<Sample>& samples) {
  std::vector<double> dts;
  dts.reserve(samples.size() - 1);
  for (std::size_t i = 1; i < samples.size(); ++i) dts.push_back(samples[i].t - samples[i - 1].t);
  auto mid = dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2);
  std::nth_element(dts.begin(), mid, dts.end());
  return *mid;
}

DrivingCycle make_unchecked_lines(std::vector<Sample> samples, std::string name,
                                  const std::vector<std::size_t>& lines) {
  validate(samples, &lines);
  return DrivingCycle(std::move(samples), std::move(name));
}

}  // namespace

DrivingCycle::DrivingCycle(std::vector<Sample> samples, std::string name)
    : samples_(std::move(samples)), name_(std::move(name)) {
  validate(samples_, nullptr);
  dt_nominal_ = median_spacing(samples_);
}

bool DrivingCycle::has_grade() const noexcept {
  return std::any_of(samples_.begin(), samples_.end(),
                     [](const Sample& s) { return s.grade != 0.0 || std::signbit(s.grade); });
}

Sample DrivingCycle::at(double t) const {
  if (t <= 0.0) return Sample{0.0, samples_.front().v, samples_.front().grade};
  if (t >= duration()) return Sample{duration(), samples_.back().v, samples_.back().grade};
  const auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                                   [](const Sample& s, double x) { return s.t < x; });
  if (it->t == t) return *it;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return Sample{t, lo.v + w * (hi.v - lo.v), lo.grade + w * (hi.grade - lo.grade)};
}

DrivingCycle DrivingCycle::window(double t0, double t1) const {
  if (!(t1 > t0)) {
    throw CycleError(CycleErrorKind::InvalidArgument, "window end must follow its start");
  }
  t0 = std::max(t0, 0.0);
  t1 = std::min(t1, duration());
  std::vector<Sample> out;
  out.push_back(at(t0));
  for (const auto& s : samples_) {
    if (s.t > t0 && s.t < t1) out.push_back(s);
  }
  out.push_back(at(t1));
  for (auto& s : out) s.t -= t0;
  out.front().t = 0.0;
  return DrivingCycle(std::move(out), name_);
}

DrivingCycle parse_cycle(std::istream& in, std::string name) {
  std::string raw;
  std::size_t line_no = 0;
  bool have_header = false;
  bool with_grade = false;
  std::vector<Sample> samples;
  std::vector<std::size_t> lines;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (!have_header) {
      if (fields.size() == 2 && fields[0] == "t" && fields[1] == "v") {
        with_grade = false;
      } else if (fields.size() == 3 && fields[0] == "t" && fields[1] == "v" && fields[2] == "grade") {
        with_grade = true;
      } else {
        throw CycleError(CycleErrorKind::MalformedRow,
                         "expected header `t,v` or `t,v,grade`" + where(line_no), line_no);
      }
      have_header = true;
      continue;
    }
    const std::size_t want = with_grade ? 3 : 2;
    Sample s;
    if (fields.size() != want || !parse_double(fields[0], s.t) || !parse_double(fields[1], s.v) ||
        (with_grade && !parse_double(fields[2], s.grade))) {
      throw CycleError(CycleErrorKind::MalformedRow, "malformed row" + where(line_no), line_no);
    }
    samples.push_back(s);
    lines.push_back(line_no);
  }
  if (!have_header) {
    throw CycleError(CycleErrorKind::TooShort, "empty cycle file");
  }
  return make_unchecked_lines(std::move(samples), std::move(name), lines);
}

DrivingCycle load_cycle(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw CycleError(CycleErrorKind::InvalidArgument, "cannot open cycle file: " + path);
  }
  auto stem = path;
  if (const auto slash = stem.find_last_of('/'); slash != std::string::npos) stem.erase(0, slash + 1);
  if (const auto dot = stem.rfind('.'); dot != std::string::npos) stem.erase(dot);
  return parse_cycle(in, stem);
}

void serialize_cycle(std::ostream& out, const DrivingCycle& cycle) {
  const bool grade = cycle.has_grade();
  out << (grade ? "t,v,grade\n" : "t,v\n");
  for (const auto& s : cycle.samples()) {
    out << detail::format_double(s.t) << ',' << detail::format_double(s.v);
    if (grade) out << ',' << detail::format_double(s.grade);
    out << '\n';
  }
}

std::string serialize_cycle(const DrivingCycle& cycle) {
  std::ostringstream os;
  serialize_cycle(os, cycle);
  return os.str();
}

void save_cycle(const std::string& path, const DrivingCycle& cycle) {
  std::ofstream out(path);
  if (!out) {
    throw CycleError(CycleErrorKind::InvalidArgument, "cannot write cycle file: " + path);
  }
  serialize_cycle(out, cycle);
}

DrivingCycle resample(const DrivingCycle& cycle, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw CycleError(CycleErrorKind::InvalidArgument, "resample step must be positive");
  }
  const double end = cycle.duration();
  const auto n = static_cast<std::size_t>(std::floor(end / dt + 1e-9));
  std::vector<Sample> out;
  out.reserve(n + 2);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (t > end) break;
    out.push_back(cycle.at(t));
  }
  // Endpoint preservation; a grid point within 1e-9 s of the end is replaced.
  if (end - out.back().t > 1e-9 * std::max(1.0, end)) {
    out.push_back(cycle.samples().back());
  } else {
    out.back() = cycle.samples().back();
  }
  return DrivingCycle(std::move(out), cycle.name());
}

CycleStats stats(const DrivingCycle& cycle, double stop_threshold) {
  if (!(stop_threshold >= 0.0)) {
    throw CycleError(CycleErrorKind::InvalidArgument, "stop threshold must be nonnegative");
  }
  const auto s = cycle.samples();
  CycleStats out;
  out.total_time = cycle.duration();
  double run = 0.0;
  bool run_from_start = false;
  bool in_run = false;
  auto close_run = [&] {
    if (in_run && !run_from_start && run >= 1.0) ++out.num_stops;
    in_run = false;
    run = 0.0;
  };
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double dt = s[i + 1].t - s[i].t;
    out.total_distance += 0.5 * (s[i].v + s[i + 1].v) / 3.6 * dt;
    const bool stopped = s[i].v <= stop_threshold && s[i + 1].v <= stop_threshold;
    if (stopped) {
      if (!in_run) {
        in_run = true;
        run_from_start = (i == 0);
      }
      run += dt;
      out.stop_time += dt;
    } else {
      close_run();
    }
  }
  close_run();
  for (const auto& x : s) out.max_speed = std::max(out.max_speed, x.v);
  out.driving_time = out.total_time - out.stop_time;
  out.avg_speed = out.total_time > 0.0 ? out.total_distance / out.total_time * 3.6 : 0.0;
  return out;
}

void to_json(nlohmann::json& j, const CycleStats& s) {
  j = nlohmann::json{{"total_distance", s.total_distance}, {"total_time", s.total_time},
                     {"driving_time", s.driving_time},     {"stop_time", s.stop_time},
                     {"avg_speed", s.avg_speed},           {"max_speed", s.max_speed},
                     {"num_stops", s.num_stops}};
}

void from_json(const nlohmann::json& j, CycleStats& s) {
  j.at("total_distance").get_to(s.total_distance);
  j.at("total_time").get_to(s.total_time);
  j.at("driving_time").get_to(s.driving_time);
  j.at("stop_time").get_to(s.stop_time);
  j.at("avg_speed").get_to(s.avg_speed);
  j.at("max_speed").get_to(s.max_speed);
  j.at("num_stops").get_to(s.num_stops);
}

DrivingCycle constant_speed(double speed_kmh, double duration, double ramp_accel) {
  if (!(duration >= 2.0) || !(speed_kmh >= 0.0) || !(ramp_accel > 0.0)) {
    throw CycleError(CycleErrorKind::InvalidArgument, "invalid constant-speed cycle request");
  }
  std::vector<Sample> out;
  const auto n = static_cast<std::size_t>(std::floor(duration));
  const double step = ramp_accel * 3.6;
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k);
    out.push_back(Sample{t, std::min(speed_kmh, step * t), 0.0});
  }
  if (duration > static_cast<double>(n)) out.push_back(Sample{duration, speed_kmh, 0.0});
  return DrivingCycle(std::move(out), "constant_" + detail::format_double(speed_kmh));
}

}  // namespace phev::cycle
