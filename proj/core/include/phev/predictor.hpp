#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phev/cycle.hpp"
#include "phev/error.hpp"

namespace phev::predictor {

enum class PredictorErrorKind { WindowTooShort, DatasetTooSmall, ZeroVariance, InvalidArgument };
using PredictorError = KindedError<PredictorErrorKind>;

inline constexpr std::size_t kFeatureCount = 7;
inline constexpr double kMinWindow = 10.0;  // s
using FeatureArray = std::array<double, kFeatureCount>;

struct FeatureVector {
  double avg_speed = 0.0;      // km/h
  double max_speed = 0.0;      // km/h
  double speed_std = 0.0;      // km/h
  double accel_rms = 0.0;      // m/s^2
  double stop_fraction = 0.0;  // [0, 1]
  double distance = 0.0;       // km
  double mean_grade = 0.0;     // %

  [[nodiscard]] FeatureArray to_array() const noexcept;
  static FeatureVector from_array(const FeatureArray& a) noexcept;
  static const std::array<const char*, kFeatureCount>& names() noexcept;
};

FeatureVector extract_features(std::span<const cycle::Sample> window,
                               double stop_threshold = cycle::kDefaultStopThreshold);
FeatureVector extract_features(const cycle::DrivingCycle& window,
                               double stop_threshold = cycle::kDefaultStopThreshold);

struct Normalization {
  FeatureArray mean{};
  FeatureArray std{};  // zero spread is stored as 1
  [[nodiscard]] FeatureArray apply(const FeatureArray& x) const noexcept;
};

struct Row {
  FeatureVector x;
  double y = 0.0;  // EV-mode SOC consumed over the window, %
  std::string source;
  double t0 = 0.0;
};

struct Dataset {
  std::vector<Row> rows;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  Normalization norm;  // computed on `train` only
  std::uint64_t seed = 0;
  double horizon = 300.0;
};

/// Label source: SOC consumed (%) by a pure-EV run over the window.
using LabelOracle = std::function<double(const cycle::DrivingCycle& window)>;

/// Number of sliding windows of length `horizon` at stride horizon/2.
std::size_t window_count(double duration, double horizon);

/// Slides windows over every cycle and labels them through the oracle in
/// parallel. Rows keep window order; the split is seeded.
Dataset build_dataset(std::span<const cycle::DrivingCycle> cycles, double horizon,
                      const LabelOracle& oracle, std::uint64_t seed, double train_fraction = 0.8);

/// Seeded shuffle split of existing rows; recomputes normalization.
void split_dataset(Dataset& ds, std::uint64_t seed, double train_fraction = 0.8);
Normalization compute_normalization(const std::vector<Row>& rows,
                                    std::span<const std::size_t> indices);

/// One-hidden-layer tanh network with a linear output.
struct Network {
  int hidden = 16;
  std::vector<double> w1;  // hidden x kFeatureCount, row major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  static Network zeros(int hidden);
  /// Uniform Glorot initialization from a seed.
  static Network glorot(int hidden, std::uint64_t seed);
  [[nodiscard]] std::size_t param_count() const noexcept;
  [[nodiscard]] std::vector<double> flatten() const;
  void unflatten(std::span<const double> p);
  [[nodiscard]] double forward(const FeatureArray& x) const noexcept;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // ordered as Network::flatten()
};

/// Mean squared error plus l2 * (sum of squared weights, biases excluded).
LossGrad loss_and_gradient(const Network& net, std::span<const FeatureArray> x,
                           std::span<const double> y, double l2);

struct Hyper {
  int hidden = 16;
  double learning_rate = 0.1;
  int epochs = 4000;
  double l2 = 1e-5;
  std::uint64_t seed = 42;
  double step_growth = 1.02;  // step enlargement after an accepted step
  double min_step = 1e-10;
};

struct RegressionModel {
  Network net;
  Normalization norm;
  double label_mean = 0.0;
  double label_std = 1.0;
  Hyper hyper;
  double horizon = 300.0;
  // Training record.
  int epochs_run = 0;
  double final_loss = 0.0;
  bool step_size_reduced = false;
  double r2_train = 0.0;
  double r2_test = 0.0;
  std::size_t rows_train = 0;
  std::size_t rows_test = 0;
  std::uint64_t dataset_seed = 0;
};

/// Full-batch gradient descent with step halving on any loss increase, so
/// accepted losses never increase.
RegressionModel train(const Dataset& ds, const Hyper& hyper);
double predict(const RegressionModel& model, const FeatureVector& fv);
/// Coefficient of determination; throws ZeroVariance for constant targets.
double r2_score(std::span<const double> y, std::span<const double> yhat);
double r2(const RegressionModel& model, const Dataset& ds, std::span<const std::size_t> indices);

void to_json(nlohmann::json& j, const RegressionModel& m);
void from_json(const nlohmann::json& j, RegressionModel& m);
void save_model(const std::string& path, const RegressionModel& m);
RegressionModel load_model(const std::string& path);

}  // namespace phev::predictor
