#include <algorithm>
#include <cmath>
#include <numeric>

#include "phev/cycle.hpp"
#include "rng.hpp"

namespace phev::cycle {
namespace {

constexpr double kAccel = 1.0;      // m/s^2, ramp-up limit
constexpr double kDecel = 1.2;      // m/s^2, ramp-down limit
constexpr double kMinLevel = 0.45;  // plateau levels relative to the scale
constexpr int kMaxIterations = 1000;

[[noreturn]] void infeasible(const std::string& why) {
  throw CycleError(CycleErrorKind::InfeasibleSpec, "infeasible synthesis spec: " + why);
}

// Splits `total` integer units into `parts` pieces, each at least `min_each`,
// with seeded random proportions.
std::vector<int> split_integer(int total, int parts, int min_each, detail::Rng& rng) {
  std::vector<int> out(static_cast<std::size_t>(parts), min_each);
  int rest = total - parts * min_each;
  if (rest < 0) return {};
  std::vector<double> w(out.size());
  for (auto& x : w) x = 0.5 + rng.uniform();
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  int used = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int extra = static_cast<int>(std::floor(rest * w[i] / wsum));
    out[i] += extra;
    used += extra;
  }
  for (int i = 0; used < rest; ++i, ++used) ++out[static_cast<std::size_t>(i) % out.size()];
  return out;
}

struct Segment {
  int start = 0;                // first sample index
  int length = 0;               // number of 1-unit intervals
  std::vector<double> level;    // per interior sample, relative level (<0 marks peak)
};

class Profile {
 public:
  Profile(std::vector<Segment> segments, int samples, double vmax, double step)
      : segments_(std::move(segments)), samples_(samples), vmax_(vmax), step_(step) {}

  std::vector<double> speeds(double scale) const {
    std::vector<double> v(static_cast<std::size_t>(samples_), 0.0);
    const double up = kAccel * 3.6 * step_;
    const double dn = kDecel * 3.6 * step_;
    for (const auto& seg : segments_) {
      const int n = seg.length;
      std::vector<double> w(static_cast<std::size_t>(n + 1), 0.0);
      for (int k = 1; k < n; ++k) {
        const double lv = seg.level[static_cast<std::size_t>(k)];
        const double target = lv < 0.0 ? vmax_ : std::min(vmax_, scale * lv);
        w[static_cast<std::size_t>(k)] = std::min(target, w[static_cast<std::size_t>(k - 1)] + up);
      }
      w[static_cast<std::size_t>(n)] = 0.0;
      for (int k = n - 1; k > 0; --k) {
        auto& cur = w[static_cast<std::size_t>(k)];
        cur = std::min(cur, w[static_cast<std::size_t>(k + 1)] + dn);
      }
      for (int k = 0; k <= n; ++k) v[static_cast<std::size_t>(seg.start + k)] = w[static_cast<std::size_t>(k)];
    }
    return v;
  }

  double distance(double scale) const {
    const auto v = speeds(scale);
    double d = 0.0;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) d += 0.5 * (v[i] + v[i + 1]) / 3.6 * step_;
    return d;
  }

 private:
  std::vector<Segment> segments_;
  int samples_;
  double vmax_;
  double step_;
};

void validate_spec(const SynthSpec& s) {
  const bool finite = std::isfinite(s.total_time) && std::isfinite(s.avg_speed) &&
                      std::isfinite(s.max_speed) && std::isfinite(s.stop_time);
  if (!finite || s.total_time < 0.0 || s.avg_speed < 0.0 || s.max_speed < 0.0 ||
      s.stop_time < 0.0 || s.num_stops < 0) {
    infeasible("targets must be finite and nonnegative");
  }
  if (!(s.stop_time < s.total_time)) infeasible("stop time must be shorter than total time");
  if (s.avg_speed > s.max_speed) infeasible("average speed exceeds maximum speed");
  if (s.total_time < 10.0) infeasible("total time below 10 s");
  if (s.avg_speed > 0.0 && s.max_speed <= kDefaultStopThreshold) {
    infeasible("maximum speed at or below the stop threshold");
  }
}

}  // namespace

DrivingCycle synthesize(const SynthSpec& spec) {
  validate_spec(spec);
  detail::Rng rng(spec.seed);

  // Integer grid of n units, later stretched so the last sample lands on total_time.
  const int n = static_cast<int>(std::ceil(spec.total_time - 1e-9));
  const double step = spec.total_time / n;
  const int stops = spec.num_stops;
  const int min_stop = step < 1.0 ? 2 : 1;
  int stop_units = static_cast<int>(std::lround(spec.stop_time / step));
  if (stops > 0) stop_units = std::max(stop_units, stops * min_stop);

  std::vector<int> stop_len;
  int idle = 0;
  if (stops > 0) {
    stop_len = split_integer(stop_units, stops, min_stop, rng);
  } else {
    idle = stop_units;  // idle at t = 0 is not counted as a stop
  }
  const int drive_units = n - stop_units;
  const int segs = stops + 1;
  constexpr int kMinSegment = 6;
  auto seg_len = split_integer(drive_units, segs, kMinSegment, rng);
  if (seg_len.empty()) infeasible("not enough driving time for the requested stops");

  const double vmax = spec.max_speed;
  const double target_distance = spec.avg_speed / 3.6 * spec.total_time;

  if (target_distance <= 0.0) {
    std::vector<Sample> flat;
    for (int k = 0; k <= n; ++k) flat.push_back(Sample{k * step, 0.0, 0.0});
    flat.back().t = spec.total_time;
    if (stops > 0) infeasible("stops requested on a zero-distance cycle");
    return DrivingCycle(std::move(flat), spec.name);
  }

  const auto peak_seg = static_cast<std::size_t>(
      std::max_element(seg_len.begin(), seg_len.end()) - seg_len.begin());
  const double ramp_units = (vmax / (kAccel * 3.6) + vmax / (kDecel * 3.6)) / step;

  std::vector<Segment> segments;
  int cursor = idle;
  for (std::size_t s = 0; s < seg_len.size(); ++s) {
    Segment seg;
    seg.start = cursor;
    seg.length = seg_len[s];
    seg.level.assign(static_cast<std::size_t>(seg.length + 1), 0.0);
    // Plateaus of 20-90 units with random relative levels.
    int k = 1;
    while (k < seg.length) {
      const int len = 20 + static_cast<int>(rng.uniform() * 70.0);
      const double lv = kMinLevel + (1.0 - kMinLevel) * rng.uniform();
      for (int j = k; j < std::min(seg.length, k + len); ++j) seg.level[static_cast<std::size_t>(j)] = lv;
      k += len;
    }
    if (s == peak_seg) {
      // Peak plateau centred in the segment, long enough to reach vmax.
      const int want = static_cast<int>(std::ceil(ramp_units)) + 6;
      const int len = std::min(seg.length - 1, std::max(want, seg.length / 4));
      const int first = 1 + (seg.length - 1 - len) / 2;
      for (int j = first; j < first + len; ++j) seg.level[static_cast<std::size_t>(j)] = -1.0;
    }
    segments.push_back(std::move(seg));
    cursor += seg_len[s];
    if (s < stop_len.size()) cursor += stop_len[s];
  }

  const Profile profile(std::move(segments), n + 1, vmax, step);
  double lo = 0.0;
  double hi = std::max(vmax, 1.0);
  int iterations = 0;
  if (profile.distance(lo) > target_distance * 1.0001) {
    infeasible("maximum-speed excursion alone exceeds the target distance");
  }
  while (profile.distance(hi) < target_distance) {
    if (++iterations > kMaxIterations || hi > vmax / kMinLevel * 4.0) {
      infeasible("average speed unreachable below the maximum speed");
    }
    hi *= 2.0;
  }
  for (; iterations < kMaxIterations; ++iterations) {
    const double mid = 0.5 * (lo + hi);
    if (profile.distance(mid) < target_distance) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-12 * hi) break;
  }
  const auto v = profile.speeds(hi);

  std::vector<Sample> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Sample{static_cast<double>(i) * step, v[i], 0.0});
  out.back().t = spec.total_time;
  DrivingCycle result(std::move(out), spec.name);

  const auto st = stats(result);
  const auto close = [](double got, double want) {
    return want == 0.0 ? got <= 1e-9 : std::abs(got - want) <= 0.05 * want;
  };
  if (st.num_stops != spec.num_stops || !close(st.avg_speed, spec.avg_speed) ||
      !close(st.max_speed, spec.max_speed) || !close(st.stop_time, spec.stop_time)) {
    infeasible("targets mutually inconsistent");
  }
  return result;
}

SynthSpec tehran_preset(int index, std::uint64_t seed) {
  struct Row {
    double total_time, avg_speed, max_speed;
    int stops;
    double stop_time;
  };
  static constexpr Row kRows[] = {
      {1822.0, 38.45, 86.39, 2, 87.0},   {2588.0, 7.88, 72.67, 25, 318.0},
      {1975.0, 18.59, 53.23, 4, 141.0},  {4485.0, 44.59, 94.15, 3, 1598.0},
      {969.0, 43.97, 98.30, 1, 38.0},    {1468.0, 34.04, 79.81, 3, 100.0},
  };
  if (index < 1 || index > 6) {
    throw CycleError(CycleErrorKind::InvalidArgument, "Tehran preset index must be 1..6");
  }
  const auto& r = kRows[index - 1];
  SynthSpec s;
  s.total_time = r.total_time;
  s.avg_speed = r.avg_speed;
  s.max_speed = r.max_speed;
  s.num_stops = r.stops;
  s.stop_time = r.stop_time;
  s.seed = seed;
  s.name = "tehran" + std::to_string(index);
  return s;
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"total_time", s.total_time}, {"avg_speed", s.avg_speed},
                     {"max_speed", s.max_speed},   {"num_stops", s.num_stops},
                     {"stop_time", s.stop_time},   {"seed", s.seed},
                     {"name", s.name}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  j.at("total_time").get_to(s.total_time);
  j.at("avg_speed").get_to(s.avg_speed);
  j.at("max_speed").get_to(s.max_speed);
  j.at("num_stops").get_to(s.num_stops);
  j.at("stop_time").get_to(s.stop_time);
  s.seed = j.value("seed", std::uint64_t{0});
  s.name = j.value("name", std::string("synthetic"));
}

}  // namespace phev::cycle
