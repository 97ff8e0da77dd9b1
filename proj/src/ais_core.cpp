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

#include "ais/ais_core.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <utility>

namespace ais {

namespace {

constexpr double kStageVarianceFloor = 1e-12;

std::string format_point(const Vector& x) {
  std::ostringstream out;
  out << "(";
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    out << (k == 0 ? "" : ", ") << x[k];
  }
  out << ")";
  return out.str();
}

Vector nan_vector(Eigen::Index size) {
  return Vector::Constant(size, std::numeric_limits<double>::quiet_NaN());
}

TraceEntry snapshot(const AisState& state, const PolicyParams& policy, bool warning) {
  TraceEntry entry{.budget = state.count(),
                   .stage = state.stages().size(),
                   .sum_S = state.sum_S(),
                   .unnormalized = estimate_unnormalized(state),
                   .target_unnormalized = state.numerator() / static_cast<double>(state.count()),
                   .normalized = nan_vector(state.dim_out()),
                   .weighted = nan_vector(state.dim_out()),
                   .policy = policy,
                   .warning = warning};
  try {
    entry.normalized = estimate_normalized(state);
    entry.weighted = estimate_weighted(state);
  } catch (const EstimatorError&) {
    // left as NaN
  }
  return entry;
}

PolicyParams apply_update(PolicyUpdater& updater, const PolicyParams& current, bool& warning) {
  try {
    return updater.update(current);
  } catch (const UpdateError&) {
    warning = true;
    return updater.fallback(current);
  }
}

}  // namespace

SampleEval evaluate_sample(const PolicyParams& policy, const TargetSpec& target,
                           const Integrand& integrand, Vector point) {
  SampleEval s;
  s.log_q = log_pdf(policy, point);
  s.log_target = target.log_density(point);
  s.integrand = integrand(point);
  s.point = std::move(point);
  return s;
}

AllocationPolicy::AllocationPolicy(std::vector<std::size_t> stage_sizes)
    : sizes_(std::move(stage_sizes)) {
  if (sizes_.empty()) {
    throw std::invalid_argument("allocation policy needs at least one stage");
  }
  cumulative_.reserve(sizes_.size() + 1);
  cumulative_.push_back(0);
  for (auto n : sizes_) {
    if (n == 0) {
      throw std::invalid_argument("every stage must draw at least one point");
    }
    cumulative_.push_back(cumulative_.back() + n);
  }
}

AllocationPolicy AllocationPolicy::constant(std::size_t stages, std::size_t per_stage) {
  return AllocationPolicy(std::vector<std::size_t>(stages, per_stage));
}

AisState::AisState(Eigen::Index dim_out, bool retain_points)
    : dim_out_(dim_out),
      retain_points_(retain_points),
      sum_s_(Vector::Zero(dim_out)),
      numerator_(Vector::Zero(dim_out)) {
  if (dim_out <= 0) {
    throw DimensionError("integrand dimension must be positive");
  }
}

void AisState::open_stage(std::optional<PolicyParams> policy) {
  StageRecord record;
  record.stage_index = stages_.size() + 1;
  record.policy = std::move(policy);
  record.sum_phi_ratio = Vector::Zero(dim_out_);
  record.sum_phi_ratio_sq = Vector::Zero(dim_out_);
  record.numerator_sum = Vector::Zero(dim_out_);
  stages_.push_back(std::move(record));
}

void AisState::step_sample(const Vector& x, double log_q, const Vector& integrand_value,
                           double log_target) {
  if (integrand_value.size() != dim_out_) {
    throw DimensionError("integrand value has dimension " + std::to_string(integrand_value.size()) +
                         ", expected " + std::to_string(dim_out_));
  }
  if (!integrand_value.allFinite()) {
    throw std::domain_error("non-finite integrand value at x = " + format_point(x));
  }
  if (!std::isfinite(log_q)) {
    throw std::domain_error("non-finite policy log-density at x = " + format_point(x));
  }
  if (std::isnan(log_target) || log_target == std::numeric_limits<double>::infinity()) {
    throw std::domain_error("invalid target log-density at x = " + format_point(x));
  }
  if (stages_.empty()) {
    open_stage();
  }
  const Vector phi_ratio = integrand_value * std::exp(-log_q);
  const double target_ratio = std::exp(log_target - log_q);

  ++count_;
  sum_s_ += phi_ratio;
  numerator_ += integrand_value * target_ratio;
  denominator_ += target_ratio;

  auto& stage = stages_.back();
  ++stage.size;
  stage.sum_phi_ratio += phi_ratio;
  stage.sum_phi_ratio_sq += phi_ratio.cwiseAbs2();
  stage.numerator_sum += integrand_value * target_ratio;
  stage.denominator_sum += target_ratio;
  stage.sum_ratio_sq += target_ratio * target_ratio;
  if (retain_points_) {
    stage.points.push_back(x);
  }
}

Vector estimate_unnormalized(const AisState& state) {
  if (state.count() == 0) {
    throw EstimatorError("unnormalized estimate needs at least one sample");
  }
  return state.sum_S() / static_cast<double>(state.count());
}

Vector estimate_normalized(const AisState& state) {
  if (!(state.denominator() > 0.0)) {
    throw EstimatorError(
        "normalized estimate undefined: every importance weight is zero (policy and target "
        "do not overlap)");
  }
  return state.numerator() / state.denominator();
}

std::vector<StageRecord> with_weight_variance_stats(const AisState& state) {
  std::vector<StageRecord> stages = state.stages();
  const double z =
      state.count() > 0 ? state.denominator() / static_cast<double>(state.count()) : 0.0;
  for (auto& stage : stages) {
    const double n = static_cast<double>(stage.size);
    if (z > 0.0) {
      const double s = stage.sum_ratio_sq / (z * z) - 2.0 * stage.denominator_sum / z + n;
      stage.weight_var_stat = std::max(s, 0.0);
    } else {
      stage.weight_var_stat = n;
    }
  }
  return stages;
}

StageWeights compute_stage_weights(const std::vector<StageRecord>& stages) {
  if (stages.empty()) {
    throw std::invalid_argument("stage weights need at least one stage");
  }
  double total = 0.0;
  double inverse_sum = 0.0;
  std::vector<double> floored(stages.size());
  for (std::size_t t = 0; t < stages.size(); ++t) {
    const double n = static_cast<double>(stages[t].size);
    floored[t] = std::max(stages[t].weight_var_stat, kStageVarianceFloor * std::max(n, 1.0));
    total += n;
    inverse_sum += n / floored[t];
  }
  StageWeights weights;
  weights.alphas.resize(stages.size());
  const double c = inverse_sum > 0.0 ? total / inverse_sum : 0.0;
  for (std::size_t t = 0; t < stages.size(); ++t) {
    weights.alphas[t] = c / floored[t];
  }
  return weights;
}

Vector estimate_weighted(const AisState& state, const StageWeights& weights) {
  const auto& stages = state.stages();
  if (weights.alphas.size() != stages.size()) {
    throw std::invalid_argument("got " + std::to_string(weights.alphas.size()) +
                                " stage weights for " + std::to_string(stages.size()) + " stages");
  }
  Vector numerator = Vector::Zero(state.dim_out());
  double denominator = 0.0;
  for (std::size_t t = 0; t < stages.size(); ++t) {
    numerator += weights.alphas[t] * stages[t].numerator_sum;
    denominator += weights.alphas[t] * stages[t].denominator_sum;
  }
  if (!(denominator > 0.0)) {
    throw EstimatorError("weighted estimate undefined: zero weighted denominator");
  }
  return numerator / denominator;
}

Vector estimate_weighted(const AisState& state) {
  if (state.stages().empty()) {
    throw EstimatorError("weighted estimate needs at least one stage");
  }
  return estimate_weighted(state, compute_stage_weights(with_weight_variance_stats(state)));
}

AisTrace run_ais(const Integrand& integrand, const TargetSpec& target, const PolicyParams& q0,
                 const AllocationPolicy& alloc, PolicyUpdater& updater, Rng& rng,
                 const AisRunOptions& options) {
  std::optional<AisState> state;
  AisTrace trace{.entries = {}, .final_state = AisState(1), .policies = {q0}, .warning = false};
  PolicyParams q = q0;
  std::size_t j = 0;

  for (std::size_t t = 1; t <= alloc.stages(); ++t) {
    const std::size_t n = alloc.stage_sizes()[t - 1];
    std::vector<Vector> points = sample(q, rng, n);

    std::vector<SampleEval> evals(n);
    std::exception_ptr failure;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (options.parallel_evaluation && count >= 64)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        evals[i] = evaluate_sample(q, target, integrand, std::move(points[i]));
      } catch (...) {
#pragma omp critical(ais_eval_failure)
        if (!failure) {
          failure = std::current_exception();
        }
      }
    }
    if (failure) {
      std::rethrow_exception(failure);
    }

    if (!state) {
      state.emplace(evals.front().integrand.size(), options.retain_points);
    }
    state->open_stage(q);
    const std::size_t boundary = alloc.cumulative(t);
    for (const auto& s : evals) {
      state->step_sample(s);
      updater.observe(s);
      ++j;
      if (options.record_every > 0 && j % options.record_every == 0 && j != boundary) {
        trace.entries.push_back(snapshot(*state, q, false));
      }
    }

    bool warning = false;
    q = apply_update(updater, q, warning);
    trace.warning = trace.warning || warning;
    trace.policies.push_back(q);
    trace.entries.push_back(snapshot(*state, q, warning));
  }
  trace.final_state = std::move(*state);
  return trace;
}

AisTrace run_ais_sample_scale(const Integrand& integrand, const TargetSpec& target,
                              const PolicyParams& q0, const AllocationPolicy& alloc,
                              PolicyUpdater& updater, Rng& rng, const AisRunOptions& options) {
  std::optional<AisState> state;
  AisTrace trace{.entries = {}, .final_state = AisState(1), .policies = {q0}, .warning = false};
  PolicyParams q = q0;
  std::size_t t = 1;

  for (std::size_t j = 1; j <= alloc.total(); ++j) {
    SampleEval s = evaluate_sample(q, target, integrand, sample_one(q, rng));
    if (!state) {
      state.emplace(s.integrand.size(), options.retain_points);
    }
    if (j == alloc.cumulative(t - 1) + 1) {
      state->open_stage(q);
    }
    state->step_sample(s);
    updater.observe(s);

    if (j == alloc.cumulative(t)) {
      bool warning = false;
      q = apply_update(updater, q, warning);
      trace.warning = trace.warning || warning;
      trace.policies.push_back(q);
      trace.entries.push_back(snapshot(*state, q, warning));
      ++t;
    } else if (options.record_every > 0 && j % options.record_every == 0) {
      trace.entries.push_back(snapshot(*state, q, false));
    }
  }
  trace.final_state = std::move(*state);
  return trace;
}

}  // namespace ais
