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

#ifndef AIS_BASELINES_HPP
#define AIS_BASELINES_HPP

#include <cstdint>
#include <vector>

#include "ais/ais_core.hpp"
#include "ais/densities.hpp"
#include "ais/sample_eval.hpp"

namespace ais {

/// Online mean and population covariance (divide by count).
class RunningCovariance {
 public:
  explicit RunningCovariance(Eigen::Index dim);

  void push(const Vector& x);
  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] const Vector& mean() const { return mean_; }
  [[nodiscard]] Matrix covariance() const;

 private:
  std::size_t count_ = 0;
  Vector mean_;
  Matrix m2_;
};

/// Adaptive Metropolis settings. The proposal from X_{i-1} = x is N(x, I) for i <= i0 and
/// N(x, scale_factor (C_i + epsilon I)) afterwards, C_i the covariance of X_0..X_{i-1}.
struct AmhConfig {
  std::size_t i0 = 1000;
  double epsilon = 0.05;
  /// (2.4)^2 / d when left at 0.
  double scale_factor = 0.0;
  std::size_t chain_length = 1000;
  std::uint64_t seed = 0;
  /// X_0; the origin when empty.
  Vector start;
};

struct AmhResult {
  std::vector<Vector> chain;         ///< X_1..X_n
  std::vector<Vector> running_mean;  ///< mean of X_1..X_i for i = 1..n
  Vector start;                      ///< X_0
  std::size_t accepted = 0;
};

/// min(1, pi_u(y) / pi_u(x)) from log-densities; 0 when log pi_u(y) is not finite.
double amh_acceptance_probability(double log_target_x, double log_target_y);

/// Proposal covariance used to produce X_i given the running covariance of X_0..X_{i-1}.
Matrix amh_proposal_covariance(std::size_t i, const RunningCovariance& history,
                               const AmhConfig& cfg);

/// Runs the chain. Proposals with a non-finite target value are rejected.
AmhResult adaptive_mh_run(const TargetSpec& target, const AmhConfig& cfg);

struct OracleTracePoint {
  std::size_t budget = 0;
  Vector estimate;
};

/// Self-normalized importance sampling with a fixed policy, recorded at the given budgets
/// (the final budget is n). Uses AisState, so it matches run_ais with IdentityUpdater
/// bit for bit on the same seed.
std::vector<OracleTracePoint> oracle_is_run(const PolicyParams& policy, const Integrand& integrand,
                                            const TargetSpec& target, std::size_t n,
                                            std::uint64_t seed,
                                            const std::vector<std::size_t>& record_budgets = {});

}  // namespace ais

#endif  // AIS_BASELINES_HPP
