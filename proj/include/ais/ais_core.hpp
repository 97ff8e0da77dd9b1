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

#ifndef AIS_AIS_CORE_HPP
#define AIS_AIS_CORE_HPP

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ais/densities.hpp"
#include "ais/policy_update.hpp"
#include "ais/sample_eval.hpp"

/**
 * \file
 * \brief The adaptive importance sampling loop and its three estimators.
 *
 * Stage t draws n_t points from q_{t-1}, adds phi/q to the running sum S, and then asks the
 * updater for q_t. The estimators are
 *  - unnormalized:  S / N
 *  - normalized:    sum(phi pi_u / q) / sum(pi_u / q)
 *  - weighted:      the normalized estimator with stage t scaled by alpha_t, where
 *                   1 / alpha_t is proportional to sum_i (pi / q - 1)^2 over that stage.
 */

namespace ais {

/// Raised when an estimator is undefined for the current state.
class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of points drawn at each stage.
class AllocationPolicy {
 public:
  explicit AllocationPolicy(std::vector<std::size_t> stage_sizes);
  static AllocationPolicy constant(std::size_t stages, std::size_t per_stage);

  [[nodiscard]] const std::vector<std::size_t>& stage_sizes() const { return sizes_; }
  [[nodiscard]] std::size_t stages() const { return sizes_.size(); }
  /// N_t for t in 1..T; cumulative(0) == 0.
  [[nodiscard]] std::size_t cumulative(std::size_t t) const { return cumulative_.at(t); }
  [[nodiscard]] std::size_t total() const { return cumulative_.back(); }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> cumulative_;
};

/// Per-stage sums. Raw points are kept only on request.
struct StageRecord {
  std::size_t stage_index = 0;  ///< 1-based
  std::size_t size = 0;
  std::optional<PolicyParams> policy;  ///< q_{t-1}, the policy that generated the stage
  Vector sum_phi_ratio;                ///< sum phi / q
  Vector sum_phi_ratio_sq;             ///< sum (phi / q)^2, componentwise
  Vector numerator_sum;                ///< sum phi pi_u / q
  double denominator_sum = 0.0;        ///< sum pi_u / q
  double sum_ratio_sq = 0.0;           ///< sum (pi_u / q)^2
  double weight_var_stat = 0.0;        ///< s_t, filled by with_weight_variance_stats
  std::vector<Vector> points;
};

/// Running accumulators at sample scale.
class AisState {
 public:
  explicit AisState(Eigen::Index dim_out, bool retain_points = false);

  /// Starts a new stage generated by `policy`.
  void open_stage(std::optional<PolicyParams> policy = std::nullopt);

  /// Adds one sample: S += phi / q and the open stage's sums.
  /**
   * Opens an anonymous stage if none is open. Throws std::domain_error naming the point when
   * phi or the log-densities are not finite.
   */
  void step_sample(const Vector& x, double log_q, const Vector& integrand_value,
                   double log_target = 0.0);
  void step_sample(const SampleEval& s) { step_sample(s.point, s.log_q, s.integrand, s.log_target); }

  [[nodiscard]] Eigen::Index dim_out() const { return dim_out_; }
  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] const Vector& sum_S() const { return sum_s_; }
  [[nodiscard]] const Vector& numerator() const { return numerator_; }
  [[nodiscard]] double denominator() const { return denominator_; }
  [[nodiscard]] const std::vector<StageRecord>& stages() const { return stages_; }

 private:
  Eigen::Index dim_out_;
  bool retain_points_;
  std::size_t count_ = 0;
  Vector sum_s_;
  Vector numerator_;
  double denominator_ = 0.0;
  std::vector<StageRecord> stages_;
};

/// N^{-1} sum_j phi(x_j) / q_{j-1}(x_j). Throws EstimatorError when count == 0.
Vector estimate_unnormalized(const AisState& state);

/// sum phi pi_u / q over sum pi_u / q. Throws EstimatorError on a zero denominator.
Vector estimate_normalized(const AisState& state);

/// Stage weights alpha_{T,t}, with sum_t n_t alpha_{T,t} = N_T.
struct StageWeights {
  std::vector<double> alphas;
};

/// Stages of `state` with weight_var_stat filled in.
/**
 * s_t = sum_i (pi_u(x) / (Z q(x)) - 1)^2 where Z = sum(pi_u / q) / N_T is the plug-in
 * normalizing constant at weighting time.
 */
std::vector<StageRecord> with_weight_variance_stats(const AisState& state);

/// alpha_t = c / max(s_t, 1e-12 n_t) with c fixed by the budget constraint.
StageWeights compute_stage_weights(const std::vector<StageRecord>& stages);

/// Weighted and normalized estimate. Throws EstimatorError on a zero weighted denominator.
Vector estimate_weighted(const AisState& state, const StageWeights& weights);

/// with_weight_variance_stats + compute_stage_weights + estimate_weighted.
Vector estimate_weighted(const AisState& state);

struct TraceEntry {
  std::size_t budget = 0;
  std::size_t stage = 0;  ///< stages opened so far
  Vector sum_S;
  Vector unnormalized;         ///< S / N
  Vector target_unnormalized;  ///< sum(phi pi_u / q) / N
  Vector normalized;  ///< NaN when undefined
  Vector weighted;    ///< NaN when undefined
  PolicyParams policy;  ///< policy in force after this budget
  bool warning = false;
};

struct AisTrace {
  std::vector<TraceEntry> entries;
  AisState final_state;
  std::vector<PolicyParams> policies;  ///< q_0, ..., q_T
  bool warning = false;                ///< some update fell back
};

struct AisRunOptions {
  /// Extra snapshots every `record_every` samples; 0 records stage boundaries only.
  std::size_t record_every = 0;
  bool retain_points = false;
  /// Evaluate each stage's draws with OpenMP. Accumulation order is unchanged.
  bool parallel_evaluation = true;
};

/// Stage-scale loop: draw n_t points from q_{t-1}, accumulate, update.
/**
 * Draws are serial so the generator stream does not depend on threads; evaluation of
 * log q, log pi_u and phi runs in parallel, and accumulation is serial in draw order, so the
 * trace is bit-identical for any thread count. An UpdateError falls back to
 * `updater.fallback` and flags the trace.
 */
AisTrace run_ais(const Integrand& integrand, const TargetSpec& target, const PolicyParams& q0,
                 const AllocationPolicy& alloc, PolicyUpdater& updater, Rng& rng,
                 const AisRunOptions& options = {});

/// Sample-scale loop: one draw at a time, update whenever j hits a stage boundary. Serial
/// reference for run_ais; same inputs give the same trace.
AisTrace run_ais_sample_scale(const Integrand& integrand, const TargetSpec& target,
                              const PolicyParams& q0, const AllocationPolicy& alloc,
                              PolicyUpdater& updater, Rng& rng, const AisRunOptions& options = {});

}  // namespace ais

#endif  // AIS_AIS_CORE_HPP
