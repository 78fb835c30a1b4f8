#include <benchmark/benchmark.h>

#include "hmfpc/fit.hpp"
#include "hmfpc/inference.hpp"
#include "hmfpc/model.hpp"
#include "hmfpc/model_reference.hpp"
#include "hmfpc/simgen.hpp"

namespace {

using namespace hmfpc;

struct Problem {
  SimulatedDataset sim;
  OrthoBasis basis;
  PenalizedObjective obj;
  ParamVector params;

  explicit Problem(int d)
      : sim(generate(SimSpec{Dgp::two_fpc, d, 5, 7, {}, {}, {}})),
        basis(OrthoBasis::build(sim.data.pooled_times(), 10)),
        obj(basis, sim.data, 0.05),
        params(initial_params(obj)) {
    params = extend_params(params, 1, 3, 0, 0.5);
    params = extend_params(params, 2, 3, 0, 0.5);
  }
};

Problem& problem(int d) {
  static std::map<int, std::unique_ptr<Problem>> cache;
  auto& p = cache[d];
  if (!p) p = std::make_unique<Problem>(d);
  return *p;
}

void BM_Gradient(benchmark::State& state, Exec exec) {
  Problem& p = problem(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(penalized_value_and_gradient(p.params, p.obj, exec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GradientReferenceTape(benchmark::State& state) {
  Problem& p = problem(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::gradient(p.params, p.obj));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LogLikelihood(benchmark::State& state, Exec exec) {
  Problem& p = problem(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(p.params, p.obj, exec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LogLikelihoodDense(benchmark::State& state) {
  Problem& p = problem(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::log_likelihood(p.params, p.obj));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Bootstrap(benchmark::State& state, Exec exec) {
  Problem& p = problem(100);
  static const FittedModel model = fit_sequence(p.obj, 2).back();
  for (auto _ : state) benchmark::DoNotOptimize(draw_bootstrap(model, p.obj, 200, 11, exec));
}

BENCHMARK_CAPTURE(BM_Gradient, serial, Exec::serial)->Arg(100)->Arg(500);
BENCHMARK_CAPTURE(BM_Gradient, parallel, Exec::parallel)->Arg(100)->Arg(500);
BENCHMARK(BM_GradientReferenceTape)->Arg(100);
BENCHMARK_CAPTURE(BM_LogLikelihood, serial, Exec::serial)->Arg(100)->Arg(500);
BENCHMARK_CAPTURE(BM_LogLikelihood, parallel, Exec::parallel)->Arg(100)->Arg(500);
BENCHMARK(BM_LogLikelihoodDense)->Arg(100);
BENCHMARK_CAPTURE(BM_Bootstrap, serial, Exec::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Bootstrap, parallel, Exec::parallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
