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

#include <cmath>
#include <limits>

#include "ais/ais_core.hpp"
#include "ais/baselines.hpp"
#include "oracles.hpp"

namespace {

using ais::AmhConfig;
using ais::Matrix;
using ais::PolicyParams;
using ais::Vector;
namespace oracle = ais::testing;

ais::Integrand identity() {
  return [](const Vector& x) { return x; };
}

TEST(AmhAcceptance, SymmetricRatio) {
  EXPECT_EQ(ais::amh_acceptance_probability(-3.0, -3.0), 1.0);
  EXPECT_EQ(ais::amh_acceptance_probability(-3.0, -1.0), 1.0);
  EXPECT_NEAR(ais::amh_acceptance_probability(-1.0, -3.0), std::exp(-2.0), 1e-15);
  EXPECT_EQ(ais::amh_acceptance_probability(0.0, -std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_EQ(ais::amh_acceptance_probability(0.0, std::nan("")), 0.0);
}

TEST(AmhProposal, IdentityDuringWarmupThenScaledCovariance) {
  AmhConfig cfg;
  cfg.i0 = 10;
  ais::RunningCovariance history(3);
  ais::Rng rng(1);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 20; ++i) {
    Vector x(3);
    x << normal(rng), 2.0 * normal(rng), normal(rng) + 1.0;
    history.push(x);
  }
  EXPECT_EQ(ais::amh_proposal_covariance(1, history, cfg), Matrix::Identity(3, 3));
  EXPECT_EQ(ais::amh_proposal_covariance(10, history, cfg), Matrix::Identity(3, 3));
  const Matrix expected = 2.4 * 2.4 / 3.0 * (history.covariance() + 0.05 * Matrix::Identity(3, 3));
  EXPECT_TRUE(ais::amh_proposal_covariance(11, history, cfg).isApprox(expected, 1e-15));
}

TEST(AmhRun, ChainLengthAndRunningMean) {
  AmhConfig cfg;
  cfg.chain_length = 500;
  cfg.i0 = 100;
  cfg.seed = 3;
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(2, 1.0), 1.0);
  const auto result = ais::adaptive_mh_run(target, cfg);
  ASSERT_EQ(result.chain.size(), 500U);
  ASSERT_EQ(result.running_mean.size(), 500U);
  EXPECT_EQ(result.start, Vector::Zero(2));
  Vector sum = Vector::Zero(2);
  for (std::size_t i = 0; i < result.chain.size(); ++i) {
    sum += result.chain[i];
    EXPECT_TRUE(result.running_mean[i].isApprox(sum / (i + 1.0), 1e-12));
  }
  EXPECT_GT(result.accepted, 0U);
  EXPECT_LE(result.accepted, 500U);
}

TEST(AmhRun, DeterministicPerSeed) {
  AmhConfig cfg;
  cfg.chain_length = 2000;
  cfg.seed = 9;
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(3, 5.0), 1.0);
  const auto a = ais::adaptive_mh_run(target, cfg);
  const auto b = ais::adaptive_mh_run(target, cfg);
  EXPECT_EQ(a.chain.back(), b.chain.back());
  EXPECT_EQ(a.accepted, b.accepted);
}

TEST(AmhRun, RejectsInvalidConfig) {
  const auto target = ais::TargetSpec::gaussian(Vector::Zero(1), 1.0);
  AmhConfig cfg;
  cfg.epsilon = 0.0;
  EXPECT_THROW(ais::adaptive_mh_run(target, cfg), std::invalid_argument);
  cfg = AmhConfig{};
  cfg.chain_length = 0;
  EXPECT_THROW(ais::adaptive_mh_run(target, cfg), std::invalid_argument);
}

TEST(AmhRun, NonFiniteTargetProposalsAreRejected) {
  // Support is the half-line x > 0; the chain must never leave it.
  const auto target = ais::TargetSpec::custom(1, [](const Vector& x) {
    return x[0] > 0.0 ? -x[0] : -std::numeric_limits<double>::infinity();
  });
  AmhConfig cfg;
  cfg.chain_length = 3000;
  cfg.i0 = 200;
  cfg.start = Vector::Constant(1, 1.0);
  const auto result = ais::adaptive_mh_run(target, cfg);
  for (const auto& x : result.chain) {
    ASSERT_GT(x[0], 0.0);
  }
}

TEST(RunningCovariance, MatchesBatchOnChainPrefixes) {
  AmhConfig cfg;
  cfg.chain_length = 5000;
  cfg.i0 = 500;
  cfg.seed = 4;
  const auto result =
      ais::adaptive_mh_run(ais::TargetSpec::gaussian(Vector::Constant(2, 5.0), 1.0), cfg);
  std::vector<Vector> history{result.start};
  ais::RunningCovariance online(2);
  online.push(result.start);
  for (std::size_t i = 0; i < result.chain.size(); ++i) {
    history.push_back(result.chain[i]);
    online.push(result.chain[i]);
    if ((i + 1) % 1000 == 0) {
      const auto moments =
          oracle::weighted_moments(history, std::vector<double>(history.size(), 1.0));
      const Matrix batch = moments.scatter / static_cast<double>(history.size());
      EXPECT_LE((online.covariance() - batch).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LE((online.mean() - moments.mean).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(AmhRun, RunningMeanApproachesTheMode) {
  const Vector mode = Vector::Constant(2, 5.0);
  const auto target = ais::TargetSpec::gaussian(mode, 1.0);
  std::vector<double> early;
  std::vector<double> late;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    AmhConfig cfg;
    cfg.chain_length = 100000;
    cfg.seed = seed;
    const auto result = ais::adaptive_mh_run(target, cfg);
    early.push_back((result.running_mean[999] - mode).norm());
    late.push_back((result.running_mean.back() - mode).norm());
  }
  EXPECT_LT(oracle::median(late), oracle::median(early));
}

TEST(OracleIs, TargetPolicyGivesPlainSampleMean) {
  const Vector mu = Vector::Constant(2, 5.0);
  const auto q = PolicyParams::gaussian(mu, Matrix::Identity(2, 2));
  const auto target = ais::TargetSpec::gaussian(mu, 1.0);
  const auto trace = ais::oracle_is_run(q, identity(), target, 1000, 17, {10, 500});
  ASSERT_EQ(trace.size(), 3U);
  EXPECT_EQ(trace[0].budget, 10U);
  EXPECT_EQ(trace[2].budget, 1000U);
  ais::Rng rng(17);
  const auto draws = ais::sample(q, rng, 1000);
  EXPECT_TRUE(trace[2].estimate.isApprox(oracle::sample_mean(draws), 1e-12));
  const std::vector<Vector> first_ten(draws.begin(), draws.begin() + 10);
  EXPECT_TRUE(trace[0].estimate.isApprox(oracle::sample_mean(first_ten), 1e-12));
}

TEST(OracleIs, SameSeedSameTrace) {
  const auto q = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2), 3.0);
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(2, 1.0), 1.0);
  const auto a = ais::oracle_is_run(q, identity(), target, 300, 5, {100, 200});
  const auto b = ais::oracle_is_run(q, identity(), target, 300, 5, {100, 200});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].estimate, b[k].estimate);
  }
}

TEST(OracleIs, BitIdenticalToIdentityUpdaterRun) {
  const auto q = PolicyParams::student(Vector::Constant(3, 1.0), 2.0 * Matrix::Identity(3, 3), 3.0);
  const auto target = ais::TargetSpec::gaussian(Vector::Constant(3, 2.0), 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto oracle_trace = ais::oracle_is_run(q, identity(), target, 1200, seed, {300, 600, 900});
    ais::IdentityUpdater updater;
    ais::Rng rng(seed);
    const auto trace = ais::run_ais(identity(), target, q, ais::AllocationPolicy::constant(4, 300),
                                    updater, rng);
    ASSERT_EQ(trace.entries.size(), oracle_trace.size());
    for (std::size_t k = 0; k < trace.entries.size(); ++k) {
      EXPECT_EQ(trace.entries[k].budget, oracle_trace[k].budget);
      EXPECT_EQ(trace.entries[k].normalized, oracle_trace[k].estimate);
    }
  }
}

TEST(OracleIs, ZeroDenominatorThrows) {
  const auto q = PolicyParams::gaussian(Vector::Zero(1), Matrix::Identity(1, 1));
  const auto nowhere = ais::TargetSpec::custom(
      1, [](const Vector&) { return -std::numeric_limits<double>::infinity(); });
  EXPECT_THROW(ais::oracle_is_run(q, identity(), nowhere, 10, 1), ais::EstimatorError);
}

}  // namespace
