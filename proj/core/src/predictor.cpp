#include "phev/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <thread>

#include "rng.hpp"

namespace phev::predictor {

namespace {

constexpr std::array<const char*, kFeatureCount> kNames = {
    "avg_speed", "max_speed", "speed_std", "accel_rms", "stop_fraction", "distance", "mean_grade"};

}  // namespace

FeatureArray FeatureVector::to_array() const noexcept {
  return {avg_speed, max_speed, speed_std, accel_rms, stop_fraction, distance, mean_grade};
}

FeatureVector FeatureVector::from_array(const FeatureArray& a) noexcept {
  return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
}

const std::array<const char*, kFeatureCount>& FeatureVector::names() noexcept { return kNames; }

FeatureVector extract_features(std::span<const cycle::Sample> w, double stop_threshold) {
  if (w.size() < 2 || w.back().t - w.front().t < kMinWindow) {
    throw PredictorError(PredictorErrorKind::WindowTooShort, "feature window shorter than 10 s");
  }
  const double total = w.back().t - w.front().t;
  double dist_m = 0.0;
  double grade_int = 0.0;
  double stop = 0.0;
  double acc_sq = 0.0;
  double vmax = 0.0;
  double vsum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    vmax = std::max(vmax, w[i].v);
    vsum += w[i].v;
    if (i + 1 == w.size()) break;
    const double dt = w[i + 1].t - w[i].t;
    dist_m += 0.5 * (w[i].v + w[i + 1].v) / 3.6 * dt;
    grade_int += 0.5 * (w[i].grade + w[i + 1].grade) * dt;
    if (w[i].v <= stop_threshold && w[i + 1].v <= stop_threshold) stop += dt;
    const double a = (w[i + 1].v - w[i].v) / 3.6 / dt;
    acc_sq += a * a;
  }
  const double n = static_cast<double>(w.size());
  const double vmean = vsum / n;
  double var = 0.0;
  for (const auto& s : w) var += (s.v - vmean) * (s.v - vmean);
  FeatureVector f;
  f.distance = dist_m / 1000.0;
  f.avg_speed = dist_m / total * 3.6;
  f.max_speed = vmax;
  f.speed_std = std::sqrt(var / n);
  f.accel_rms = std::sqrt(acc_sq / (n - 1.0));
  f.stop_fraction = std::clamp(stop / total, 0.0, 1.0);
  f.mean_grade = grade_int / total;
  return f;
}

FeatureVector extract_features(const cycle::DrivingCycle& window, double stop_threshold) {
  return extract_features(window.samples(), stop_threshold);
}

FeatureArray Normalization::apply(const FeatureArray& x) const noexcept {
  FeatureArray out{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[i] = (x[i] - mean[i]) / std[i];
  return out;
}

std::size_t window_count(double duration, double horizon) {
  if (!(horizon > 0.0) || duration < horizon) return 0;
  const double stride = horizon / 2.0;
  return static_cast<std::size_t>(std::floor((duration - horizon) / stride + 1e-9)) + 1;
}

Normalization compute_normalization(const std::vector<Row>& rows,
                                    std::span<const std::size_t> indices) {
  Normalization norm;
  if (indices.empty()) {
    norm.std.fill(1.0);
    return norm;
  }
  const double n = static_cast<double>(indices.size());
  for (std::size_t idx : indices) {
    const auto a = rows.at(idx).x.to_array();
    for (std::size_t k = 0; k < kFeatureCount; ++k) norm.mean[k] += a[k];
  }
  for (auto& m : norm.mean) m /= n;
  for (std::size_t idx : indices) {
    const auto a = rows[idx].x.to_array();
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      norm.std[k] += (a[k] - norm.mean[k]) * (a[k] - norm.mean[k]);
    }
  }
  for (auto& s : norm.std) {
    s = std::sqrt(s / n);
    if (!(s > 1e-12)) s = 1.0;
  }
  return norm;
}

void split_dataset(Dataset& ds, std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw PredictorError(PredictorErrorKind::InvalidArgument, "train fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> order(ds.rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size())));
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  ds.seed = seed;
  ds.norm = compute_normalization(ds.rows, ds.train);
}

Dataset build_dataset(std::span<const cycle::DrivingCycle> cycles, double horizon,
                      const LabelOracle& oracle, std::uint64_t seed, double train_fraction) {
  if (!(horizon >= kMinWindow)) {
    throw PredictorError(PredictorErrorKind::InvalidArgument, "horizon must be at least 10 s");
  }
  Dataset ds;
  ds.horizon = horizon;
  const double stride = horizon / 2.0;
  std::vector<cycle::DrivingCycle> windows;
  for (const auto& c : cycles) {
    const std::size_t n = window_count(c.duration(), horizon);
    for (std::size_t k = 0; k < n; ++k) {
      const double t0 = static_cast<double>(k) * stride;
      windows.push_back(c.window(t0, t0 + horizon));
      Row r;
      r.x = extract_features(windows.back());
      r.source = c.name();
      r.t0 = t0;
      ds.rows.push_back(std::move(r));
    }
  }
  // Labels are independent simulations; fan out in fixed-size batches and
  // collect by index.
  const std::size_t batch = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < windows.size(); start += batch) {
    const std::size_t stop = std::min(windows.size(), start + batch);
    std::vector<std::future<double>> jobs;
    for (std::size_t i = start; i < stop; ++i) {
      jobs.push_back(std::async(std::launch::async, [&oracle, &windows, i] { return oracle(windows[i]); }));
    }
    for (std::size_t i = start; i < stop; ++i) ds.rows[i].y = jobs[i - start].get();
  }
  split_dataset(ds, seed, train_fraction);
  return ds;
}

// ---------------------------------------------------------------------------
// Network

Network Network::zeros(int hidden) {
  Network n;
  n.hidden = hidden;
  n.w1.assign(static_cast<std::size_t>(hidden) * kFeatureCount, 0.0);
  n.b1.assign(static_cast<std::size_t>(hidden), 0.0);
  n.w2.assign(static_cast<std::size_t>(hidden), 0.0);
  return n;
}

Network Network::glorot(int hidden, std::uint64_t seed) {
  Network n = zeros(hidden);
  detail::Rng rng(seed);
  const double a1 = std::sqrt(6.0 / (kFeatureCount + hidden));
  const double a2 = std::sqrt(6.0 / (hidden + 1.0));
  for (auto& w : n.w1) w = rng.uniform(-a1, a1);
  for (auto& w : n.w2) w = rng.uniform(-a2, a2);
  return n;
}

std::size_t Network::param_count() const noexcept { return w1.size() + b1.size() + w2.size() + 1; }

std::vector<double> Network::flatten() const {
  std::vector<double> p;
  p.reserve(param_count());
  p.insert(p.end(), w1.begin(), w1.end());
  p.insert(p.end(), b1.begin(), b1.end());
  p.insert(p.end(), w2.begin(), w2.end());
  p.push_back(b2);
  return p;
}

void Network::unflatten(std::span<const double> p) {
  if (p.size() != param_count()) {
    throw PredictorError(PredictorErrorKind::InvalidArgument, "parameter vector size mismatch");
  }
  auto it = p.begin();
  std::copy_n(it, w1.size(), w1.begin());
  it += static_cast<std::ptrdiff_t>(w1.size());
  std::copy_n(it, b1.size(), b1.begin());
  it += static_cast<std::ptrdiff_t>(b1.size());
  std::copy_n(it, w2.size(), w2.begin());
  it += static_cast<std::ptrdiff_t>(w2.size());
  b2 = *it;
}

double Network::forward(const FeatureArray& x) const noexcept {
  double out = b2;
  for (int j = 0; j < hidden; ++j) {
    double z = b1[j];
    const double* row = &w1[static_cast<std::size_t>(j) * kFeatureCount];
    for (std::size_t i = 0; i < kFeatureCount; ++i) z += row[i] * x[i];
    out += w2[j] * std::tanh(z);
  }
  return out;
}

LossGrad loss_and_gradient(const Network& net, std::span<const FeatureArray> x,
                           std::span<const double> y, double l2) {
  if (x.size() != y.size() || x.empty()) {
    throw PredictorError(PredictorErrorKind::InvalidArgument, "features and labels must align");
  }
  const auto h = static_cast<std::size_t>(net.hidden);
  const std::size_t off_b1 = net.w1.size();
  const std::size_t off_w2 = off_b1 + h;
  const std::size_t off_b2 = off_w2 + h;
  LossGrad out;
  out.grad.assign(net.param_count(), 0.0);
  std::vector<double> act(h);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) {
    double f = net.b2;
    for (std::size_t j = 0; j < h; ++j) {
      double z = net.b1[j];
      for (std::size_t i = 0; i < kFeatureCount; ++i) z += net.w1[j * kFeatureCount + i] * x[r][i];
      act[j] = std::tanh(z);
      f += net.w2[j] * act[j];
    }
    const double e = f - y[r];
    out.loss += e * e * inv_n;
    const double df = 2.0 * e * inv_n;
    out.grad[off_b2] += df;
    for (std::size_t j = 0; j < h; ++j) {
      out.grad[off_w2 + j] += df * act[j];
      const double dz = df * net.w2[j] * (1.0 - act[j] * act[j]);
      out.grad[off_b1 + j] += dz;
      for (std::size_t i = 0; i < kFeatureCount; ++i) out.grad[j * kFeatureCount + i] += dz * x[r][i];
    }
  }
  for (std::size_t k = 0; k < net.w1.size(); ++k) {
    out.loss += l2 * net.w1[k] * net.w1[k];
    out.grad[k] += 2.0 * l2 * net.w1[k];
  }
  for (std::size_t j = 0; j < h; ++j) {
    out.loss += l2 * net.w2[j] * net.w2[j];
    out.grad[off_w2 + j] += 2.0 * l2 * net.w2[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

RegressionModel train(const Dataset& ds, const Hyper& hyper) {
  if (ds.train.size() < 20) {
    throw PredictorError(PredictorErrorKind::DatasetTooSmall,
                         "training needs at least 20 rows, have " + std::to_string(ds.train.size()));
  }
  if (hyper.hidden < 1 || hyper.epochs < 0 || !(hyper.learning_rate > 0.0)) {
    throw PredictorError(PredictorErrorKind::InvalidArgument, "invalid training hyperparameters");
  }
  RegressionModel m;
  m.hyper = hyper;
  m.norm = ds.norm;
  m.horizon = ds.horizon;
  m.dataset_seed = ds.seed;

  std::vector<FeatureArray> x;
  std::vector<double> y;
  x.reserve(ds.train.size());
  for (std::size_t idx : ds.train) {
    x.push_back(ds.norm.apply(ds.rows[idx].x.to_array()));
    y.push_back(ds.rows[idx].y);
  }
  const double n = static_cast<double>(y.size());
  m.label_mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double var = 0.0;
  for (double v : y) var += (v - m.label_mean) * (v - m.label_mean);
  m.label_std = std::sqrt(var / n);
  if (!(m.label_std > 1e-12)) m.label_std = 1.0;
  for (auto& v : y) v = (v - m.label_mean) / m.label_std;

  m.net = Network::glorot(hyper.hidden, hyper.seed);
  // A zero output layer starts the fit at the label mean.
  std::fill(m.net.w2.begin(), m.net.w2.end(), 0.0);
  auto params = m.net.flatten();
  auto cur = loss_and_gradient(m.net, x, y, hyper.l2);
  double step = hyper.learning_rate;
  Network trial = m.net;
  int epoch = 0;
  for (; epoch < hyper.epochs; ++epoch) {
    bool accepted = false;
    while (step >= hyper.min_step) {
      std::vector<double> next(params.size());
      for (std::size_t k = 0; k < params.size(); ++k) next[k] = params[k] - step * cur.grad[k];
      trial.unflatten(next);
      auto cand = loss_and_gradient(trial, x, y, hyper.l2);
      if (cand.loss <= cur.loss) {
        params = std::move(next);
        m.net = trial;
        cur = std::move(cand);
        step *= hyper.step_growth;
        accepted = true;
        break;
      }
      step *= 0.5;
      m.step_size_reduced = true;
    }
    if (!accepted) break;
  }
  m.epochs_run = epoch;
  m.final_loss = cur.loss;
  m.rows_train = ds.train.size();
  m.rows_test = ds.test.size();
  // R2 is undefined for constant labels; the record then keeps 0.
  const auto scored = [&](std::span<const std::size_t> idx) {
    try {
      return idx.size() >= 2 ? r2(m, ds, idx) : 0.0;
    } catch (const PredictorError&) {
      return 0.0;
    }
  };
  m.r2_train = scored(ds.train);
  m.r2_test = scored(ds.test);
  return m;
}

double predict(const RegressionModel& model, const FeatureVector& fv) {
  return model.label_mean + model.label_std * model.net.forward(model.norm.apply(fv.to_array()));
}

double r2_score(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size() || y.empty()) {
    throw PredictorError(PredictorErrorKind::InvalidArgument, "r2 needs aligned, nonempty samples");
  }
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_tot = 0.0;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_tot += (y[i] - mean) * (y[i] - mean);
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  }
  if (!(ss_tot > 0.0)) throw PredictorError(PredictorErrorKind::ZeroVariance, "labels have zero variance");
  return 1.0 - ss_res / ss_tot;
}

double r2(const RegressionModel& model, const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<double> y;
  std::vector<double> yhat;
  for (std::size_t idx : indices) {
    y.push_back(ds.rows.at(idx).y);
    yhat.push_back(predict(model, ds.rows[idx].x));
  }
  return r2_score(y, yhat);
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const RegressionModel& m) {
  nlohmann::json w1 = nlohmann::json::array();
  for (int r = 0; r < m.net.hidden; ++r) {
    const auto first = m.net.w1.begin() + static_cast<std::ptrdiff_t>(r * kFeatureCount);
    w1.push_back(std::vector<double>(first, first + kFeatureCount));
  }
  j = {
      {"format", "phev-soc-predictor"},
      {"version", 1},
      {"features", std::vector<std::string>(kNames.begin(), kNames.end())},
      {"architecture", {{"inputs", kFeatureCount}, {"hidden", m.net.hidden}, {"activation", "tanh"}}},
      {"normalization", {{"mean", m.norm.mean}, {"std", m.norm.std}}},
      {"label", {{"mean", m.label_mean}, {"std", m.label_std}, {"horizon_s", m.horizon}}},
      {"weights", {{"w1", w1}, {"b1", m.net.b1}, {"w2", m.net.w2}, {"b2", m.net.b2}}},
      {"hyper",
       {{"hidden", m.hyper.hidden},
        {"learning_rate", m.hyper.learning_rate},
        {"epochs", m.hyper.epochs},
        {"l2", m.hyper.l2},
        {"seed", m.hyper.seed},
        {"step_growth", m.hyper.step_growth},
        {"min_step", m.hyper.min_step}}},
      {"training",
       {{"epochs_run", m.epochs_run},
        {"final_loss", m.final_loss},
        {"step_size_reduced", m.step_size_reduced},
        {"r2_train", m.r2_train},
        {"r2_test", m.r2_test},
        {"rows_train", m.rows_train},
        {"rows_test", m.rows_test},
        {"dataset_seed", m.dataset_seed}}},
  };
}

void from_json(const nlohmann::json& j, RegressionModel& m) {
  try {
    if (j.at("format").get<std::string>() != "phev-soc-predictor") {
      throw ConfigError("not a SOC predictor model file");
    }
    const int hidden = j.at("architecture").at("hidden").get<int>();
    m = RegressionModel{};
    m.net = Network::zeros(hidden);
    const auto& w = j.at("weights");
    const auto w1 = w.at("w1").get<std::vector<std::vector<double>>>();
    if (w1.size() != static_cast<std::size_t>(hidden)) throw ConfigError("w1 row count mismatch");
    for (int r = 0; r < hidden; ++r) {
      if (w1[r].size() != kFeatureCount) throw ConfigError("w1 column count mismatch");
      std::copy(w1[r].begin(), w1[r].end(), m.net.w1.begin() + static_cast<std::ptrdiff_t>(r * kFeatureCount));
    }
    m.net.b1 = w.at("b1").get<std::vector<double>>();
    m.net.w2 = w.at("w2").get<std::vector<double>>();
    m.net.b2 = w.at("b2").get<double>();
    if (m.net.b1.size() != static_cast<std::size_t>(hidden) || m.net.w2.size() != static_cast<std::size_t>(hidden)) {
      throw ConfigError("bias/output weight size mismatch");
    }
    m.norm.mean = j.at("normalization").at("mean").get<FeatureArray>();
    m.norm.std = j.at("normalization").at("std").get<FeatureArray>();
    const auto& lab = j.at("label");
    m.label_mean = lab.at("mean").get<double>();
    m.label_std = lab.at("std").get<double>();
    m.horizon = lab.value("horizon_s", 300.0);
    if (j.contains("hyper")) {
      const auto& h = j["hyper"];
      m.hyper.hidden = h.value("hidden", hidden);
      m.hyper.learning_rate = h.value("learning_rate", m.hyper.learning_rate);
      m.hyper.epochs = h.value("epochs", m.hyper.epochs);
      m.hyper.l2 = h.value("l2", m.hyper.l2);
      m.hyper.seed = h.value("seed", m.hyper.seed);
      m.hyper.step_growth = h.value("step_growth", m.hyper.step_growth);
      m.hyper.min_step = h.value("min_step", m.hyper.min_step);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      m.epochs_run = t.value("epochs_run", 0);
      m.final_loss = t.value("final_loss", 0.0);
      m.step_size_reduced = t.value("step_size_reduced", false);
      m.r2_train = t.value("r2_train", 0.0);
      m.r2_test = t.value("r2_test", 0.0);
      m.rows_train = t.value("rows_train", std::size_t{0});
      m.rows_test = t.value("rows_test", std::size_t{0});
      m.dataset_seed = t.value("dataset_seed", std::uint64_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::string& path, const RegressionModel& m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file: " + path);
  out << nlohmann::json(m).dump(2) << '\n';
}

RegressionModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file " + path + " is not valid JSON: " + e.what());
  }
  return j.get<RegressionModel>();
}

}  // namespace phev::predictor
