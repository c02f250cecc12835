#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "phev/predictor.hpp"

using namespace phev::predictor;
using phev::cycle::DrivingCycle;
using phev::cycle::Sample;

namespace {

DrivingCycle flat(double v, int seconds) {
  std::vector<Sample> s;
  for (int t = 0; t <= seconds; ++t) s.push_back({double(t), v, 0.0});
  return DrivingCycle(s, "flat");
}

Dataset synthetic(std::size_t n, double (*label)(const FeatureArray&), std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureArray a{};
    a[0] = 10 + 60 * u(gen);
    a[1] = a[0] + 30 * u(gen);
    a[2] = 20 * u(gen);
    a[3] = u(gen);
    a[4] = 0.5 * u(gen);
    a[5] = 1 + 4 * u(gen);
    a[6] = 0.0;
    ds.rows.push_back({FeatureVector::from_array(a), label(a), "syn", double(i)});
  }
  split_dataset(ds, seed);
  return ds;
}

double linear(const FeatureArray& a) { return 0.05 * a[0] + 0.3 * a[3] + 1.2 * a[5] - 2.0 * a[4]; }
double constant(const FeatureArray&) { return 3.5; }

Hyper quick() {
  Hyper h;
  h.hidden = 8;
  h.epochs = 3000;
  return h;
}

}  // namespace

TEST_CASE("features of simple windows") {
  const auto f = extract_features(flat(36.0, 100));
  CHECK(f.avg_speed == doctest::Approx(36.0));
  CHECK(f.max_speed == doctest::Approx(36.0));
  CHECK(f.speed_std == doctest::Approx(0.0));
  CHECK(f.accel_rms == doctest::Approx(0.0));
  CHECK(f.stop_fraction == 0.0);
  CHECK(f.distance == doctest::Approx(1.0));

  const auto z = extract_features(flat(0.0, 100));
  CHECK(z.stop_fraction == doctest::Approx(1.0));
  CHECK(z.distance == 0.0);

  try {
    (void)extract_features(flat(10.0, 5));
    FAIL("short window accepted");
  } catch (const PredictorError& e) {
    CHECK(e.kind() == PredictorErrorKind::WindowTooShort);
  }
}

TEST_CASE("feature array round trip") {
  FeatureVector f{1, 2, 3, 4, 0.5, 6, 7};
  const auto back = FeatureVector::from_array(f.to_array());
  CHECK(back.to_array() == f.to_array());
  CHECK(FeatureVector::names().size() == kFeatureCount);
}

TEST_CASE("window count") {
  CHECK(window_count(1800.0, 300.0) == 11);
  CHECK(window_count(300.0, 300.0) == 1);
  CHECK(window_count(200.0, 300.0) == 0);
}

TEST_CASE("dataset building is deterministic") {
  const std::vector<DrivingCycle> cycles{flat(30.0, 1800), flat(50.0, 900)};
  const LabelOracle oracle = [](const DrivingCycle& w) { return w.duration() / 100.0; };
  const auto a = build_dataset(cycles, 300.0, oracle, 3);
  const auto b = build_dataset(cycles, 300.0, oracle, 3);
  CHECK(a.rows.size() == 11 + 5);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train.size() + a.test.size() == a.rows.size());
  CHECK(a.rows[0].y == doctest::Approx(3.0));
}

TEST_CASE("r2 definitions") {
  const std::vector<double> y{1, 2, 3, 4};
  CHECK(r2_score(y, y) == doctest::Approx(1.0));
  const std::vector<double> mean(4, 2.5);
  CHECK(r2_score(y, mean) == doctest::Approx(0.0));
}

TEST_CASE("gradient agrees with finite differences") {
  auto ds = synthetic(40, linear, 9);
  std::vector<FeatureArray> x;
  std::vector<double> y;
  for (const auto& r : ds.rows) {
    x.push_back(ds.norm.apply(r.x.to_array()));
    y.push_back(r.y);
  }
  const auto net = Network::glorot(5, 1);
  const auto lg = loss_and_gradient(net, x, y, 1e-3);
  auto p = net.flatten();
  REQUIRE(lg.grad.size() == p.size());
  for (std::size_t k = 0; k < p.size(); k += 3) {
    const double h = 1e-6;
    Network a = net, b = net;
    auto pa = p, pb = p;
    pa[k] += h;
    pb[k] -= h;
    a.unflatten(pa);
    b.unflatten(pb);
    const double fd = (loss_and_gradient(a, x, y, 1e-3).loss - loss_and_gradient(b, x, y, 1e-3).loss) / (2 * h);
    CHECK(lg.grad[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("training fits a linear target") {
  const auto ds = synthetic(200, linear, 4);
  const auto m = train(ds, quick());
  CHECK(r2(m, ds, ds.test) >= 0.999);
  CHECK(m.r2_test == doctest::Approx(r2(m, ds, ds.test)));
  // Memorization check on a training row.
  const auto& row = ds.rows[ds.train[0]];
  CHECK(predict(m, row.x) == doctest::Approx(row.y).epsilon(0.02));
}

TEST_CASE("constant labels give a constant model") {
  const auto ds = synthetic(50, constant, 5);
  const auto m = train(ds, Hyper{});
  CHECK(m.final_loss < 1e-4);
  for (std::size_t i : ds.test) CHECK(predict(m, ds.rows[i].x) == doctest::Approx(3.5).epsilon(1e-3));
  try {
    (void)r2(m, ds, ds.test);
    FAIL("no throw");
  } catch (const PredictorError& e) {
    CHECK(e.kind() == PredictorErrorKind::ZeroVariance);
  }
}

TEST_CASE("a zero network outputs its bias") {
  RegressionModel m;
  m.net = Network::zeros(4);
  m.net.b2 = 0.0;
  m.label_mean = 2.0;
  m.label_std = 1.0;
  for (auto& s : m.norm.std) s = 1.0;
  CHECK(predict(m, FeatureVector{}) == doctest::Approx(2.0));
  CHECK(predict(m, FeatureVector{80, 120, 10, 1, 0.2, 5, 0}) == doctest::Approx(2.0));
}

TEST_CASE("prediction is continuous") {
  const auto ds = synthetic(80, linear, 6);
  const auto m = train(ds, quick());
  auto f = ds.rows[0].x;
  const double y0 = predict(m, f);
  f.avg_speed += 1e-6;
  CHECK(std::abs(predict(m, f) - y0) < 1e-4);
}

TEST_CASE("model JSON round trip") {
  const auto ds = synthetic(60, linear, 8);
  const auto m = train(ds, quick());
  const std::string path = "predictor_roundtrip_test.json";
  save_model(path, m);
  const auto back = load_model(path);
  std::remove(path.c_str());
  CHECK(predict(back, ds.rows[3].x) == predict(m, ds.rows[3].x));
  CHECK(back.r2_test == m.r2_test);
  CHECK(nlohmann::json(back) == nlohmann::json(m));
}

TEST_CASE("too few rows are rejected") {
  auto ds = synthetic(3, linear, 1);
  CHECK_THROWS_AS(train(ds, quick()), PredictorError);
}
