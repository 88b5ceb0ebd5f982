#include "hfda/harness.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <string>

namespace {

const hfda::Experiment& experiment(const std::string& model) {
  static std::map<std::string, hfda::Experiment> cache;
  auto it = cache.find(model);
  if (it == cache.end()) {
    hfda::ExperimentConfig c = hfda::default_config(model);
    c.resolve();
    it = cache.emplace(model, hfda::prepare_experiment(c)).first;
  }
  return it->second;
}

const char* model_name(int64_t i) {
  static const char* names[] = {"fitzhugh_nagumo", "lotka_volterra", "van_der_pol"};
  return names[i];
}

void full_gradient(benchmark::State& state, hfda::DerivativeMode mode) {
  const auto& ex = experiment(model_name(state.range(0)));
  auto opts = ex.problem_options();
  opts.mode = mode;
  const hfda::EstimationProblem problem(ex.full_problem->system(), ex.data(), ex.z_star, opts);
  std::size_t steps = 0;
  for (auto _ : state) {
    auto g = problem.gradient(ex.theta_star);
    steps = g.rk_steps;
    benchmark::DoNotOptimize(g.grad.data());
  }
  state.counters["rk_steps"] = static_cast<double>(steps);
  state.SetLabel(model_name(state.range(0)));
}

void BM_FullGradientForward(benchmark::State& state) {
  full_gradient(state, hfda::DerivativeMode::forward);
}
void BM_FullGradientAdjoint(benchmark::State& state) {
  full_gradient(state, hfda::DerivativeMode::adjoint);
}

// One systematic stochastic gradient per iteration at the model's batch interval.
void BM_SystematicStochasticGradient(benchmark::State& state) {
  const auto& ex = experiment(model_name(state.range(0)));
  hfda::Sampler sampler(hfda::SamplerKind::systematic, ex.data().size(), ex.config.kappa(),
                        hfda::Rng(1));
  std::size_t steps = 0;
  for (auto _ : state) {
    auto g = ex.full_problem->stochastic_gradient(ex.theta_star, sampler.next());
    steps = g.rk_steps;
    benchmark::DoNotOptimize(g.grad.data());
  }
  state.counters["rk_steps"] = static_cast<double>(steps);
  state.SetLabel(model_name(state.range(0)));
}

void BM_KsgdIteration(benchmark::State& state) {
  const auto& ex = experiment(model_name(state.range(0)));
  hfda::Sampler sampler(hfda::SamplerKind::systematic, ex.data().size(), ex.config.kappa(),
                        hfda::Rng(2));
  auto ks = hfda::KsgdState::initial(ex.theta_star);
  for (auto _ : state) {
    const auto rs = ex.full_problem->residuals(ks.theta, sampler.next());
    ks = hfda::ksgd_step(ks, rs, hfda::KsgdForm::automatic);
    benchmark::DoNotOptimize(ks.theta.data());
  }
  state.SetLabel(model_name(state.range(0)));
}

BENCHMARK(BM_FullGradientForward)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_FullGradientAdjoint)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SystematicStochasticGradient)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_KsgdIteration)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
