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

#include "ais/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ais {

RunningCovariance::RunningCovariance(Eigen::Index dim)
    : mean_(Vector::Zero(dim)), m2_(Matrix::Zero(dim, dim)) {}

void RunningCovariance::push(const Vector& x) {
  ++count_;
  const Vector delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_.noalias() += delta * (x - mean_).transpose();
}

Matrix RunningCovariance::covariance() const {
  if (count_ == 0) {
    return m2_;
  }
  const Matrix c = m2_ / static_cast<double>(count_);
  return 0.5 * (c + c.transpose());
}

double amh_acceptance_probability(double log_target_x, double log_target_y) {
  if (!std::isfinite(log_target_y)) {
    return 0.0;
  }
  const double log_ratio = log_target_y - log_target_x;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

Matrix amh_proposal_covariance(std::size_t i, const RunningCovariance& history,
                               const AmhConfig& cfg) {
  const auto d = history.mean().size();
  const Matrix identity = Matrix::Identity(d, d);
  if (i <= cfg.i0) {
    return identity;
  }
  const double factor = cfg.scale_factor > 0.0 ? cfg.scale_factor
                                               : 2.4 * 2.4 / static_cast<double>(d);
  return factor * (history.covariance() + cfg.epsilon * identity);
}

AmhResult adaptive_mh_run(const TargetSpec& target, const AmhConfig& cfg) {
  if (cfg.i0 < 1 || !(cfg.epsilon > 0.0) || cfg.chain_length < 1) {
    throw std::invalid_argument("AMH requires i0 >= 1, epsilon > 0 and chain_length >= 1");
  }
  const Eigen::Index d = cfg.start.size() > 0 ? cfg.start.size() : target.dim;
  if (d <= 0) {
    throw DimensionError("AMH needs a target dimension or a start point");
  }
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  AmhResult result;
  result.start = cfg.start.size() > 0 ? cfg.start : Vector::Zero(d);
  result.chain.reserve(cfg.chain_length);
  result.running_mean.reserve(cfg.chain_length);

  RunningCovariance history(d);
  history.push(result.start);
  Vector x = result.start;
  double log_x = target.log_density(x);
  Vector sum = Vector::Zero(d);

  for (std::size_t i = 1; i <= cfg.chain_length; ++i) {
    const Matrix cov = amh_proposal_covariance(i, history, cfg);
    const Matrix chol = cov.llt().matrixL();
    Vector z(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      z[k] = normal(rng);
    }
    const Vector y = x + chol * z;
    const double log_y = target.log_density(y);
    const double u = uniform(rng);
    if (u < amh_acceptance_probability(log_x, log_y)) {
      x = y;
      log_x = log_y;
      ++result.accepted;
    }
    history.push(x);
    sum += x;
    result.chain.push_back(x);
    result.running_mean.push_back(sum / static_cast<double>(i));
  }
  return result;
}

std::vector<OracleTracePoint> oracle_is_run(const PolicyParams& policy, const Integrand& integrand,
                                            const TargetSpec& target, std::size_t n,
                                            std::uint64_t seed,
                                            const std::vector<std::size_t>& record_budgets) {
  if (n == 0) {
    throw std::invalid_argument("oracle run needs n >= 1");
  }
  std::vector<std::size_t> budgets = record_budgets;
  budgets.push_back(n);
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  if (budgets.front() == 0 || budgets.back() > n) {
    throw std::invalid_argument("record budgets must lie in [1, n]");
  }

  Rng rng(seed);
  std::optional<AisState> state;
  std::vector<OracleTracePoint> trace;
  auto next = budgets.begin();
  for (std::size_t j = 1; j <= n; ++j) {
    SampleEval s = evaluate_sample(policy, target, integrand, sample_one(policy, rng));
    if (!state) {
      state.emplace(s.integrand.size());
      state->open_stage(policy);
    }
    state->step_sample(s);
    if (j == *next) {
      trace.push_back({j, estimate_normalized(*state)});
      ++next;
    }
  }
  return trace;
}

}  // namespace ais
