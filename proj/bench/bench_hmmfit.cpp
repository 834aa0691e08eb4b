#include <benchmark/benchmark.h>

#include "hmmfit/confint.hpp"
#include "hmmfit/dataset.hpp"
#include "hmmfit/likelihood.hpp"
#include "hmmfit/model.hpp"
#include "hmmfit/simulate.hpp"

using namespace hmmfit;

namespace {

const FitResult& tyt_fit(const Objective& obj) {
  static const FitResult f = fit(obj, OptimizerConfig{});
  return f;
}

const Objective& tyt_objective() {
  static const Objective obj(tyt_data(), 2, natural_to_working(make_natural({1.0, 3.0}, {0.8, 0.2, 0.2, 0.8})));
  return obj;
}

void BM_Nll(benchmark::State& state) {
  const auto p = preset("sim3");
  const auto x = simulate_hmm(p, static_cast<std::size_t>(state.range(0)), 1).x;
  const auto w = natural_to_working(p);
  for (auto _ : state) benchmark::DoNotOptimize(nll(w, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Nll)->Arg(1000)->Arg(10000);

void BM_ValueGradHess(benchmark::State& state) {
  const auto& obj = tyt_objective();
  const auto x0 = obj.initial_free();
  for (auto _ : state) benchmark::DoNotOptimize(obj.fgh(x0));
}
BENCHMARK(BM_ValueGradHess);

void BM_FitMode(benchmark::State& state) {
  const auto& obj = tyt_objective();
  OptimizerConfig cfg;
  cfg.mode = static_cast<OptimMode>(state.range(0));
  state.SetLabel(std::string(to_string(cfg.mode)));
  for (auto _ : state) benchmark::DoNotOptimize(fit(obj, cfg).nll);
}
BENCHMARK(BM_FitMode)
    ->Arg(static_cast<int>(OptimMode::NoDeriv))
    ->Arg(static_cast<int>(OptimMode::Grad))
    ->Arg(static_cast<int>(OptimMode::Hess))
    ->Arg(static_cast<int>(OptimMode::GradHess))
    ->Unit(benchmark::kMillisecond);

// Serial reference loop versus the OpenMP replicate loop (range = threads, 0 = serial).
void BM_Bootstrap(benchmark::State& state) {
  const auto& obj = tyt_objective();
  const auto& f = tyt_fit(obj);
  BootstrapOptions opt;
  opt.B = 200;
  opt.serial = state.range(0) == 0;
  opt.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_ci(obj, f, opt).archive.estimates.size());
}
BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
