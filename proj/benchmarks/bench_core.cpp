#include <benchmark/benchmark.h>

#include <string>

#include "phev/battery.hpp"
#include "phev/controller.hpp"
#include "phev/cycle.hpp"
#include "phev/predictor.hpp"
#include "phev/sim.hpp"

using namespace phev;

namespace {

const cycle::DrivingCycle& wltc() {
  static const auto c = cycle::load_cycle(std::string(PHEV_DATA_DIR) + "/cycles/wltc_class3b.csv");
  return c;
}

void BM_WltcRun(benchmark::State& state) {
  sim::ScenarioConfig sc{.models = {}, .cycle = wltc()};
  sc.record_trace = state.range(0) != 0;
  for (auto _ : state) {
    auto r = sim::run(sc);
    benchmark::DoNotOptimize(r.summary.fc_total);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(wltc().size()));
}
BENCHMARK(BM_WltcRun)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_WltcRunLearnedPredictor(benchmark::State& state) {
  sim::ScenarioConfig sc{.models = {}, .cycle = wltc()};
  sc.models.soc_model = std::make_shared<const predictor::RegressionModel>(
      predictor::load_model(std::string(PHEV_DATA_DIR) + "/models/soc_predictor.json"));
  sc.record_trace = false;
  for (auto _ : state) benchmark::DoNotOptimize(sim::run(sc).summary.fc_total);
}
BENCHMARK(BM_WltcRunLearnedPredictor)->Unit(benchmark::kMillisecond);

void BM_FuzzyEvaluate(benchmark::State& state) {
  const auto cfg = controller::default_rulebase();
  controller::Inputs in{30.0, 60.0, 45.0, 10.0};
  for (auto _ : state) {
    in.speed = in.speed > 140.0 ? 0.0 : in.speed + 0.7;
    benchmark::DoNotOptimize(controller::evaluate(cfg, in));
  }
}
BENCHMARK(BM_FuzzyEvaluate);

void BM_BatteryStep(benchmark::State& state) {
  const battery::CellParams cp;
  const battery::PackConfig pc;
  auto s = battery::BatteryState::rested(cp, 80.0, 25.0);
  double sign = 1.0;
  for (auto _ : state) {
    auto r = battery::step(s, sign * 60.0, 1.0, cp, pc, 25.0);
    sign = -sign;
    s = std::move(r.state);
    benchmark::DoNotOptimize(s.soc);
  }
}
BENCHMARK(BM_BatteryStep);

void BM_SolveCurrent(benchmark::State& state) {
  const battery::CellParams cp;
  const battery::PackConfig pc;
  const auto s = battery::BatteryState::rested(cp, 60.0, 25.0);
  double p = 0.0;
  for (auto _ : state) {
    p = p > 80.0 ? -40.0 : p + 1.3;
    benchmark::DoNotOptimize(battery::solve_current(s, p, cp, pc));
  }
}
BENCHMARK(BM_SolveCurrent);

void BM_Synthesize(benchmark::State& state) {
  const auto spec = cycle::tehran_preset(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(cycle::synthesize(spec).size());
}
BENCHMARK(BM_Synthesize)->DenseRange(1, 6)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
