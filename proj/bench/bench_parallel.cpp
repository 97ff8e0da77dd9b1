// Copyright 2026 The AIS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// OpenMP kernels against their serial references. Pass --benchmark_filter to narrow.

#include <benchmark/benchmark.h>

#include "ais/ais_core.hpp"
#include "ais/diagnostics.hpp"
#include "ais/harness.hpp"

namespace {

ais::Vector identity(const ais::Vector& x) { return x; }

void run_single(benchmark::State& state, bool stage_scale) {
  const auto dim = static_cast<Eigen::Index>(state.range(0));
  ais::ExperimentConfig cfg;
  cfg.dim = dim;
  cfg.validate();
  const auto target = ais::TargetSpec::gaussian(cfg.mu_star, cfg.sigma_star);
  for (auto _ : state) {
    ais::Rng rng(1);
    auto updater = ais::make_updater(ais::UpdaterKind::Moments, dim,
                                     {ais::RegularizationKind::SigFull, cfg.sigma0});
    const auto policy = ais::AllocationPolicy::constant(20, 1000);
    const auto trace =
        stage_scale
            ? ais::run_ais(identity, target, cfg.initial_policy(), policy, *updater, rng)
            : ais::run_ais_sample_scale(identity, target, cfg.initial_policy(), policy, *updater,
                                        rng);
    benchmark::DoNotOptimize(trace.entries.back().normalized);
  }
  state.SetItemsProcessed(state.iterations() * 20000);
}

void BM_RunAisParallel(benchmark::State& state) { run_single(state, true); }
void BM_RunAisSampleScale(benchmark::State& state) { run_single(state, false); }
BENCHMARK(BM_RunAisParallel)->Arg(2)->Arg(16)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RunAisSampleScale)->Arg(2)->Arg(16)->Unit(benchmark::kMillisecond)->UseRealTime();

void run_grid(benchmark::State& state, bool parallel) {
  ais::ExperimentConfig cfg;
  cfg.dim = 2;
  cfg.alloc = {ais::Schedule{10, 400}};
  cfg.replicates = static_cast<std::size_t>(state.range(0));
  cfg.validate();
  for (auto _ : state) {
    const auto rows = parallel ? ais::run_experiment(cfg) : ais::run_experiment_serial(cfg);
    benchmark::DoNotOptimize(rows.data());
  }
}

void BM_ExperimentParallel(benchmark::State& state) { run_grid(state, true); }
void BM_ExperimentSerial(benchmark::State& state) { run_grid(state, false); }
BENCHMARK(BM_ExperimentParallel)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ExperimentSerial)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_QuadratureVariance2d(benchmark::State& state) {
  const auto q = ais::PolicyParams::student(ais::Vector::Zero(2), ais::Matrix::Identity(2, 2), 3.0);
  for (auto _ : state) {
    const auto v = ais::asymptotic_variance(q, identity, ais::Vector::Zero(2),
                                            ais::VarianceMethod::Quadrature);
    benchmark::DoNotOptimize(v.matrix);
  }
}
BENCHMARK(BM_QuadratureVariance2d)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
