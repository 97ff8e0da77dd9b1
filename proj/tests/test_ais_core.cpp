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

#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <random>

#include "ais/ais_core.hpp"
#include "oracles.hpp"

namespace {

using ais::AisState;
using ais::AllocationPolicy;
using ais::Matrix;
using ais::PolicyParams;
using ais::StageRecord;
using ais::Vector;
namespace oracle = ais::testing;

Vector v1(double x) { return Vector::Constant(1, x); }

ais::Integrand identity() {
  return [](const Vector& x) { return x; };
}

// Adds a point whose importance weight pi_u / q is `w`.
void add_weighted(AisState& state, double phi, double w) {
  state.step_sample(v1(0.0), 0.0, v1(phi), std::log(w));
}

TEST(StepSample, SingleRatio) {
  AisState state(1);
  state.step_sample(v1(0.3), std::log(0.5), v1(1.0));
  EXPECT_DOUBLE_EQ(state.sum_S()[0], 2.0);
  EXPECT_EQ(state.count(), 1U);
  EXPECT_DOUBLE_EQ(ais::estimate_unnormalized(state)[0], 2.0);
}

TEST(StepSample, RunningMean) {
  AisState state(1);
  state.step_sample(v1(0.0), 0.0, v1(2.0));
  state.step_sample(v1(0.0), 0.0, v1(4.0));
  EXPECT_DOUBLE_EQ(ais::estimate_unnormalized(state)[0], 3.0);
}

TEST(StepSample, NonFiniteIntegrandNamesThePoint) {
  AisState state(1);
  try {
    state.step_sample(v1(1.25), 0.0, v1(std::nan("")));
    FAIL() << "expected an error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("1.25"), std::string::npos);
  }
  EXPECT_THROW(state.step_sample(v1(0.0), 0.0, Vector::Zero(2)), ais::DimensionError);
}

TEST(StepSample, CountMatchesStageSizes) {
  AisState state(1);
  state.open_stage();
  for (int i = 0; i < 3; ++i) {
    add_weighted(state, 1.0, 1.0);
  }
  state.open_stage();
  for (int i = 0; i < 4; ++i) {
    add_weighted(state, 1.0, 1.0);
  }
  std::size_t total = 0;
  for (const auto& s : state.stages()) {
    total += s.size;
  }
  EXPECT_EQ(total, state.count());
  EXPECT_EQ(state.stages()[1].size, 4U);
}

TEST(EstimateUnnormalized, EmptyStateThrows) {
  AisState state(1);
  EXPECT_THROW(ais::estimate_unnormalized(state), ais::EstimatorError);
}

TEST(EstimateNormalized, EqualWeightsGiveArithmeticMean) {
  AisState state(1);
  for (double phi : {1.0, 2.0, 6.0}) {
    add_weighted(state, phi, 0.7);
  }
  EXPECT_NEAR(ais::estimate_normalized(state)[0], 3.0, 1e-14);
}

TEST(EstimateNormalized, WeightedMean) {
  AisState state(1);
  add_weighted(state, 0.0, 1.0);
  add_weighted(state, 4.0, 3.0);
  EXPECT_NEAR(ais::estimate_normalized(state)[0], 3.0, 1e-14);
}

TEST(EstimateNormalized, ZeroDenominatorThrows) {
  AisState state(1);
  state.step_sample(v1(0.0), 0.0, v1(1.0), -std::numeric_limits<double>::infinity());
  EXPECT_THROW(ais::estimate_normalized(state), ais::EstimatorError);
}

TEST(EstimateNormalized, InvariantToTargetScaleAndEquivariantToShift) {
  ais::Rng rng(5);
  std::normal_distribution<double> normal;
  AisState base(1);
  AisState scaled(1);
  AisState shifted(1);
  for (int i = 0; i < 200; ++i) {
    const double x = normal(rng);
    const double log_w = -0.5 * x * x + 0.3 * normal(rng);
    base.step_sample(v1(x), 0.0, v1(x), log_w);
    scaled.step_sample(v1(x), 0.0, v1(x), log_w + std::log(1e6));
    shifted.step_sample(v1(x), 0.0, v1(x + 2.5), log_w);
  }
  EXPECT_NEAR(ais::estimate_normalized(scaled)[0], ais::estimate_normalized(base)[0], 1e-13);
  EXPECT_NEAR(ais::estimate_normalized(shifted)[0], ais::estimate_normalized(base)[0] + 2.5, 1e-13);
}

std::vector<StageRecord> stages_with(const std::vector<std::size_t>& sizes,
                                     const std::vector<double>& stats) {
  std::vector<StageRecord> stages(sizes.size());
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    stages[t].size = sizes[t];
    stages[t].weight_var_stat = stats[t];
  }
  return stages;
}

TEST(StageWeights, EqualStatisticsGiveUnitWeights) {
  for (double s : {1e-3, 1.0, 42.0}) {
    const auto w = ais::compute_stage_weights(stages_with({1, 1}, {s, s}));
    EXPECT_NEAR(w.alphas[0], 1.0, 1e-15);
    EXPECT_NEAR(w.alphas[1], 1.0, 1e-15);
  }
}

TEST(StageWeights, HandComputedExample) {
  const auto w = ais::compute_stage_weights(stages_with({1, 1}, {1.0, 3.0}));
  EXPECT_NEAR(w.alphas[0], 1.5, 1e-15);
  EXPECT_NEAR(w.alphas[1], 0.5, 1e-15);
}

TEST(StageWeights, PerfectStageDominates) {
  const auto w = ais::compute_stage_weights(stages_with({10, 10, 10}, {0.0, 2.0, 5.0}));
  EXPECT_GT(w.alphas[0], w.alphas[1]);
  EXPECT_GT(w.alphas[0], w.alphas[2]);
  EXPECT_TRUE(std::isfinite(w.alphas[0]));
  for (double a : w.alphas) {
    EXPECT_GE(a, 0.0);
  }
}

TEST(StageWeights, BudgetConstraintUnderFuzzing) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> stages(1, 80);
  std::uniform_int_distribution<std::size_t> sizes(1, 10000);
  std::uniform_real_distribution<double> log_s(-12.0, 12.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t t_max = stages(rng);
    std::vector<std::size_t> n(t_max);
    std::vector<double> s(t_max);
    double total = 0.0;
    for (std::size_t t = 0; t < t_max; ++t) {
      n[t] = sizes(rng);
      s[t] = trial % 7 == 0 && t == 0 ? 0.0 : std::pow(10.0, log_s(rng));
      total += static_cast<double>(n[t]);
    }
    const auto w = ais::compute_stage_weights(stages_with(n, s));
    double sum = 0.0;
    for (std::size_t t = 0; t < t_max; ++t) {
      sum += static_cast<double>(n[t]) * w.alphas[t];
    }
    ASSERT_NEAR(sum / total, 1.0, 1e-10);
  }
}

TEST(WeightStatistic, MatchesDirectSumWithPluginConstant) {
  ais::Rng rng(3);
  std::normal_distribution<double> normal;
  AisState state(1);
  std::vector<std::vector<double>> ratios(2);
  for (int t = 0; t < 2; ++t) {
    state.open_stage();
    for (int i = 0; i < 50; ++i) {
      const double log_r = 0.5 * normal(rng) + 3.0;
      state.step_sample(v1(0.0), 0.0, v1(1.0), log_r);
      ratios[t].push_back(std::exp(log_r));
    }
  }
  double z = 0.0;
  for (const auto& stage : ratios) {
    for (double r : stage) {
      z += r;
    }
  }
  z /= 100.0;
  const auto stages = ais::with_weight_variance_stats(state);
  for (int t = 0; t < 2; ++t) {
    double s = 0.0;
    for (double r : ratios[t]) {
      s += (r / z - 1.0) * (r / z - 1.0);
    }
    EXPECT_NEAR(stages[t].weight_var_stat, s, 1e-10 * std::max(1.0, s));
  }
}

TEST(EstimateWeighted, UnitWeightsReduceToNormalized) {
  ais::Rng rng(8);
  std::normal_distribution<double> normal;
  AisState state(2);
  for (int t = 0; t < 4; ++t) {
    state.open_stage();
    for (int i = 0; i < 25; ++i) {
      Vector phi(2);
      phi << normal(rng), normal(rng);
      state.step_sample(Vector::Zero(2), 0.0, phi, normal(rng));
    }
  }
  ais::StageWeights ones{std::vector<double>(4, 1.0)};
  EXPECT_TRUE(ais::estimate_weighted(state, ones).isApprox(ais::estimate_normalized(state), 1e-13));
}

TEST(EstimateWeighted, EqualStatisticsReduceToNormalized) {
  auto stages = stages_with({5, 5, 5}, {2.0, 2.0, 2.0});
  const auto w = ais::compute_stage_weights(stages);
  AisState state(1);
  for (int t = 0; t < 3; ++t) {
    state.open_stage();
    for (int i = 0; i < 5; ++i) {
      add_weighted(state, t + i, 1.0 + 0.1 * i);
    }
  }
  EXPECT_NEAR(ais::estimate_weighted(state, w)[0], ais::estimate_normalized(state)[0], 1e-13);
}

TEST(EstimateWeighted, GarbageStageIsIgnoredInTheLimit) {
  AisState state(1);
  state.open_stage();
  add_weighted(state, 1.0, 1.0);
  add_weighted(state, 3.0, 1.0);
  state.open_stage();
  add_weighted(state, 100.0, 1.0);
  add_weighted(state, 200.0, 1.0);
  const auto w = ais::compute_stage_weights(stages_with({2, 2}, {1.0, 1e12}));
  EXPECT_NEAR(ais::estimate_weighted(state, w)[0], 2.0, 1e-9);
}

TEST(EstimateWeighted, MismatchedWeightsThrow) {
  AisState state(1);
  add_weighted(state, 1.0, 1.0);
  EXPECT_THROW(ais::estimate_weighted(state, ais::StageWeights{{1.0, 1.0}}),
               std::invalid_argument);
}

TEST(AllocationPolicy, CumulativeAndValidation) {
  const AllocationPolicy alloc({2, 3, 5});
  EXPECT_EQ(alloc.cumulative(0), 0U);
  EXPECT_EQ(alloc.cumulative(2), 5U);
  EXPECT_EQ(alloc.total(), 10U);
  EXPECT_THROW(AllocationPolicy({2, 0}), std::invalid_argument);
  EXPECT_THROW(AllocationPolicy(std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(RunAis, PolicyEqualToIntegrandGivesOne) {
  const auto q = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2), 3.0);
  const ais::Integrand phi = [q](const Vector& x) { return v1(std::exp(ais::log_pdf(q, x))); };
  ais::IdentityUpdater updater;
  ais::Rng rng(4);
  ais::AisRunOptions options;
  options.record_every = 7;
  const auto trace = ais::run_ais(phi, ais::TargetSpec::gaussian(Vector::Zero(2), 1.0), q,
                                  AllocationPolicy::constant(5, 20), updater, rng, options);
  ASSERT_FALSE(trace.entries.empty());
  for (const auto& e : trace.entries) {
    // exp(a) * exp(-a) is 1 up to one rounding per factor.
    EXPECT_NEAR(e.unnormalized[0], 1.0, 1e-14);
  }
}

TEST(RunAis, DeterministicForFixedSeed) {
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(2, 5.0), 1.0);
  const auto q0 = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2) * 5.0 / 3.0, 3.0);
  auto run = [&] {
    auto updater = ais::make_updater(ais::UpdaterKind::Moments, 2, {});
    ais::Rng rng(77);
    return ais::run_ais(identity(), target, q0, AllocationPolicy::constant(10, 100), *updater, rng);
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    EXPECT_EQ(a.entries[k].sum_S, b.entries[k].sum_S);
    EXPECT_EQ(a.entries[k].normalized, b.entries[k].normalized);
    EXPECT_EQ(a.entries[k].weighted, b.entries[k].weighted);
    EXPECT_TRUE(a.entries[k].policy == b.entries[k].policy);
  }
}

TEST(RunAis, ThreadCountDoesNotChangeTheTrace) {
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(3, 5.0), 1.0);
  const auto q0 = PolicyParams::student(Vector::Zero(3), Matrix::Identity(3, 3) * 5.0 / 3.0, 3.0);
  auto run = [&](bool parallel, int threads) {
    omp_set_num_threads(threads);
    auto updater = ais::make_updater(ais::UpdaterKind::Moments, 3,
                                     {ais::RegularizationKind::SigFull, 5.0});
    ais::Rng rng(5);
    ais::AisRunOptions options;
    options.parallel_evaluation = parallel;
    return ais::run_ais(identity(), target, q0, AllocationPolicy::constant(6, 500), *updater, rng,
                        options);
  };
  const auto serial = run(false, 1);
  const auto parallel = run(true, 4);
  ASSERT_EQ(serial.entries.size(), parallel.entries.size());
  for (std::size_t k = 0; k < serial.entries.size(); ++k) {
    EXPECT_EQ(serial.entries[k].sum_S, parallel.entries[k].sum_S);
    EXPECT_EQ(serial.entries[k].weighted, parallel.entries[k].weighted);
  }
}

TEST(RunAis, StageAndSampleScaleAgreeBitForBit) {
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(2, 1.0), 1.0);
  const auto q0 = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2), 3.0);
  for (const auto& sizes : {std::vector<std::size_t>{2, 3}, std::vector<std::size_t>{1, 1, 1, 1, 1},
                            std::vector<std::size_t>{40, 7, 90}}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto u1 = ais::make_updater(ais::UpdaterKind::Moments, 2, {});
      auto u2 = ais::make_updater(ais::UpdaterKind::Moments, 2, {});
      ais::Rng r1(seed);
      ais::Rng r2(seed);
      ais::AisRunOptions options;
      options.record_every = 1;
      const auto a = ais::run_ais(identity(), target, q0, AllocationPolicy(sizes), *u1, r1, options);
      const auto b = ais::run_ais_sample_scale(identity(), target, q0, AllocationPolicy(sizes),
                                               *u2, r2, options);
      ASSERT_EQ(a.entries.size(), b.entries.size());
      for (std::size_t k = 0; k < a.entries.size(); ++k) {
        ASSERT_EQ(a.entries[k].budget, b.entries[k].budget);
        ASSERT_EQ(a.entries[k].sum_S, b.entries[k].sum_S);
      }
    }
  }
}

TEST(RunAis, RecordsEveryRequestedBudget) {
  const auto target = ais::TargetSpec::gaussian(Vector::Zero(1), 1.0);
  const auto q0 = PolicyParams::student(Vector::Zero(1), Matrix::Identity(1, 1), 3.0);
  ais::IdentityUpdater updater;
  ais::Rng rng(1);
  ais::AisRunOptions options;
  options.record_every = 25;
  const auto trace = ais::run_ais(identity(), target, q0, AllocationPolicy::constant(4, 50),
                                  updater, rng, options);
  std::vector<std::size_t> budgets;
  for (const auto& e : trace.entries) {
    budgets.push_back(e.budget);
  }
  EXPECT_EQ(budgets, (std::vector<std::size_t>{25, 50, 75, 100, 125, 150, 175, 200}));
  EXPECT_EQ(trace.policies.size(), 5U);
}

TEST(RunAis, ToyProblemErrorShrinksAcrossStages) {
  const Vector mu_star = Vector::Constant(2, 5.0);
  const auto target = ais::TargetSpec::gaussian(mu_star, 1.0);
  const auto q0 = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2) * 5.0 / 3.0, 3.0);
  std::vector<double> first;
  std::vector<double> last;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto updater = ais::make_updater(ais::UpdaterKind::Moments, 2, {});
    ais::Rng rng(seed);
    const auto trace = ais::run_ais(identity(), target, q0, AllocationPolicy::constant(20, 200),
                                    *updater, rng);
    first.push_back((trace.entries.front().normalized - mu_star).squaredNorm());
    last.push_back((trace.entries.back().normalized - mu_star).squaredNorm());
  }
  EXPECT_GT(oracle::median(first), 0.05);
  EXPECT_LT(oracle::median(last), oracle::median(first) / 10.0);
}

TEST(RunAis, UnnormalizedEstimateUnbiasedUnderAdaptation) {
  // Truth: the integral of x pi(x) is mu* = 2 when pi is N(2, 1).
  const auto target = ais::TargetSpec::gaussian(v1(2.0), 1.0);
  const ais::Integrand phi = [target](const Vector& x) {
    return Vector(x * std::exp(target.log_density(x)));
  };
  const auto q0 = PolicyParams::student(v1(0.0), Matrix::Identity(1, 1) * 5.0 / 3.0, 3.0);
  std::vector<double> estimates;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    auto updater = ais::make_updater(ais::UpdaterKind::Moments, 1,
                                     {ais::RegularizationKind::SigFull, 5.0});
    ais::Rng rng(seed);
    const auto trace = ais::run_ais(phi, target, q0, AllocationPolicy::constant(4, 25), *updater,
                                    rng);
    estimates.push_back(trace.entries.back().unnormalized[0]);
  }
  const auto [mean, se] = oracle::mean_and_se(estimates);
  EXPECT_LT(std::abs(mean - 2.0), 4.0 * se);
}

}  // namespace
