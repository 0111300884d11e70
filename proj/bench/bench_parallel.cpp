#include "retina/estimate.hpp"
#include "retina/mor.hpp"

#include <benchmark/benchmark.h>

using namespace retina;

namespace {

const FullOrderModel& model() {
  static const FullOrderModel m(LayerStack{}, GridConfig{});
  return m;
}

const Stepper& stepper() {
  static const Stepper st(model(), 1e-3);
  return st;
}

Policy policy_of(const benchmark::State& state) { return state.range(0) ? Policy::parallel : Policy::serial; }

void label(benchmark::State& state) { state.SetLabel(state.range(0) ? "parallel" : "serial"); }

void BM_SimulateMany(benchmark::State& state) {
  const auto alphas = parameter_grid(ParameterDomain{}, 3, 3);
  const std::vector<std::vector<double>> u{std::vector<double>(200, 0.03)};
  for (auto _ : state) benchmark::DoNotOptimize(simulate_many(stepper(), alphas, u, policy_of(state)));
  label(state);
}

void BM_ResponseCache(benchmark::State& state) {
  const std::vector<double> u(200, 0.03);
  for (auto _ : state) {
    ResponseCache cache(stepper(), u, policy_of(state));
    benchmark::DoNotOptimize(cache.steps());
  }
  label(state);
}

void BM_GlobalBasis(benchmark::State& state) {
  const auto snaps = parameter_grid(ParameterDomain{}, 2, 2);
  for (auto _ : state) benchmark::DoNotOptimize(global_basis(model(), snaps, 6, 6, {}, policy_of(state)));
  label(state);
}

void BM_ErrorScan(benchmark::State& state) {
  static const MorStudy study = [] {
    MorStudy s;
    s.scan_grid_2d = 3;
    s.horizon = 200;
    return s;
  }();
  static const ScanReference ref =
      make_scan_reference(stepper(), study.scan_params(), study.horizon, study.target, Policy::parallel);
  static const ParametricROM rom = build_deim_gb_rom(model(), study, 6, 3);
  for (auto _ : state) benchmark::DoNotOptimize(error_scan_pointwise(rom, ref, policy_of(state)));
  label(state);
}

}  // namespace

BENCHMARK(BM_SimulateMany)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ResponseCache)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_GlobalBasis)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime()->Iterations(2);
BENCHMARK(BM_ErrorScan)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
