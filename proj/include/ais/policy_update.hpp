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

#ifndef AIS_POLICY_UPDATE_HPP
#define AIS_POLICY_UPDATE_HPP

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ais/densities.hpp"
#include "ais/sample_eval.hpp"

/**
 * \file
 * \brief Exploit-step policy updates, all written as empirical risk minimization.
 *
 * Every sample x_j drawn from q_{j-1} contributes m_theta(x_j) / q_{j-1}(x_j) to the risk
 * R(theta). The accumulator keeps either sufficient statistics (moment matching, Gaussian KL)
 * or every retained sample (generic KL and variance risk), and the update functions return the
 * minimizer. Regularization of the fitted scale is applied by the updater objects.
 */

namespace ais {

/// A policy update failed: weight collapse or a minimizer that did not converge.
class UpdateError : public std::runtime_error {
 public:
  UpdateError(const std::string& what, Vector last_iterate = {}, double gradient_norm = 0.0);

  [[nodiscard]] const Vector& last_iterate() const { return last_iterate_; }
  [[nodiscard]] double gradient_norm() const { return gradient_norm_; }

 private:
  Vector last_iterate_;
  double gradient_norm_;
};

enum class RegularizationKind {
  SigFull,   ///< "sig_1": full scale estimate plus ridge
  SigDiag,   ///< "sig_1/2": diagonal of the estimate plus ridge
  SigFixed,  ///< "sig_0": scale never estimated
};

struct RegularizationMode {
  RegularizationKind mode = RegularizationKind::SigFixed;
  double sigma0 = 5.0;
};

std::string to_string(RegularizationKind kind);
RegularizationKind regularization_from_string(const std::string& name);

/// Ridge sigma0 / sqrt(max(1, n_eff)) on the diagonal, or the fixed sigma0 * I * (nu - 2) / nu.
/**
 * Operates on scale matrices. `dof` is the policy's degrees of freedom (+infinity for the
 * Gaussian family, where the fixed scale is sigma0 * I). The input is symmetrized first.
 */
Matrix regularize_covariance(const Matrix& sigma, double n_eff, const RegularizationMode& reg,
                             double dof);

enum class RiskKind { Moments, Gmm, KL, VarianceRisk };

struct RetainedSample {
  Vector point;
  double log_q = 0.0;
  double log_f = 0.0;
  double phi = 0.0;  ///< scalar integrand value, VarianceRisk only
};

/// m_value / q, the contribution of one sample to R(theta) at a fixed theta.
double risk_increment(double m_value, double log_q);

/// Running state of R(theta).
/**
 * Weighted first and second moments use w = f(x) / q(x) and a weighted Welford update, so
 * sum_wxx() stays accurate when the weighted mean is far from the origin.
 */
class RiskAccumulator {
 public:
  RiskAccumulator(RiskKind kind, Eigen::Index dim, bool retain_samples);

  /// Adds one sample. `integrand` is only read for VarianceRisk, where it must be scalar.
  void accumulate(const Vector& x, double log_q, double log_f, const Vector& integrand = {});
  void accumulate(const SampleEval& sample) {
    accumulate(sample.point, sample.log_q, sample.log_target, sample.integrand);
  }

  [[nodiscard]] RiskKind kind() const { return kind_; }
  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] double sum_weights() const { return sum_w_; }
  [[nodiscard]] Vector sum_wx() const { return sum_w_ * mean_; }
  [[nodiscard]] Matrix sum_wxx() const { return scatter_ + sum_w_ * mean_ * mean_.transpose(); }
  /// Weighted mean sum(w x) / sum(w).
  [[nodiscard]] const Vector& weighted_mean() const { return mean_; }
  /// sum(w (x - mean)(x - mean)^T).
  [[nodiscard]] const Matrix& centered_scatter() const { return scatter_; }
  [[nodiscard]] bool retains_samples() const { return retain_; }
  [[nodiscard]] const std::vector<RetainedSample>& retained() const { return samples_; }

 private:
  RiskKind kind_;
  Eigen::Index dim_;
  bool retain_;
  std::size_t count_ = 0;
  double sum_w_ = 0.0;
  Vector mean_;
  Matrix scatter_;
  std::vector<RetainedSample> samples_;
};

/// Raw result of an update, before regularization.
struct PolicyFit {
  Vector location;
  Matrix scale;  ///< may be singular (e.g. a single point)
  double objective = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool kept_previous = false;  ///< flat objective, previous theta returned
};

enum class FreeParameters { Location, LocationAndScale };

struct MinimizerOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 500;
  bool start_from_current = true;
  bool start_from_moments = true;
};

/// Weighted location and (nu - 2) / nu times the weighted scatter. nu may be +infinity.
PolicyFit update_student_moments(const RiskAccumulator& acc, double nu);

/// Moment map g for the generalized method of moments.
enum class MomentMap {
  Mean,           ///< g(x) = x
  MeanAndSecond,  ///< g(x) = (x, x x^T)
};

/// ||E_theta(g) - weighted empirical mean of g||^2.
double gmm_objective(const RiskAccumulator& acc, const PolicyParams& candidate, MomentMap g);

/// Minimizes the GMM objective. With MomentMap::Mean only the location is free.
PolicyFit update_gmm(const RiskAccumulator& acc, const PolicyParams& current, MomentMap g,
                     const MinimizerOptions& options = {});

/// R(theta) = -sum_j log q_theta(x_j) f(x_j) / q_{j-1}(x_j), over retained samples.
double kl_risk(const RiskAccumulator& acc, const PolicyParams& candidate);

/// Gaussian family: closed-form weighted MLE. Otherwise (or with force_generic): minimizes
/// kl_risk over the retained samples.
PolicyFit update_kl(const RiskAccumulator& acc, const PolicyParams& current, FreeParameters free,
                    const MinimizerOptions& options = {}, bool force_generic = false);

/// R(theta) = sum_j phi(x_j)^2 / (q_theta(x_j) q_{j-1}(x_j)), over retained samples.
double variance_risk(const RiskAccumulator& acc, const PolicyParams& candidate);

PolicyFit update_variance_risk(const RiskAccumulator& acc, const PolicyParams& current,
                               FreeParameters free, const MinimizerOptions& options = {});

/// Exploit step of the AIS loop.
class PolicyUpdater {
 public:
  virtual ~PolicyUpdater() = default;

  /// Feeds one explored sample to the risk.
  virtual void observe(const SampleEval& sample) = 0;
  /// Called at each stage boundary. Throws UpdateError on failure.
  virtual PolicyParams update(const PolicyParams& current) = 0;
  /// Used by the loop after an UpdateError.
  [[nodiscard]] virtual PolicyParams fallback(const PolicyParams& current) const {
    return current;
  }
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Never changes the policy.
class IdentityUpdater final : public PolicyUpdater {
 public:
  void observe(const SampleEval&) override {}
  PolicyParams update(const PolicyParams& current) override { return current; }
  [[nodiscard]] std::string name() const override { return "identity"; }
};

enum class UpdaterKind { Identity, Moments, Gmm, KL, VarianceRisk };

std::string to_string(UpdaterKind kind);
UpdaterKind updater_from_string(const std::string& name);

/// Shared plumbing of the four risk-based updaters.
class RiskUpdater : public PolicyUpdater {
 public:
  void observe(const SampleEval& sample) override { acc_.accumulate(sample); }
  [[nodiscard]] PolicyParams fallback(const PolicyParams& current) const override;
  [[nodiscard]] const RiskAccumulator& accumulator() const { return acc_; }
  [[nodiscard]] const RegularizationMode& regularization() const { return reg_; }

 protected:
  RiskUpdater(RiskKind kind, Eigen::Index dim, bool retain, RegularizationMode reg);

  [[nodiscard]] FreeParameters free_parameters() const;
  /// current with its scale replaced by the fixed scale when the mode is SigFixed.
  [[nodiscard]] PolicyParams working_policy(const PolicyParams& current) const;
  /// Applies the regularization mode and builds the new policy.
  [[nodiscard]] PolicyParams finish(const PolicyParams& current, const PolicyFit& fit) const;

  RiskAccumulator acc_;
  RegularizationMode reg_;
};

/// Exact Student (or Gaussian, nu = infinity) moment matching.
class MomentUpdater final : public RiskUpdater {
 public:
  MomentUpdater(Eigen::Index dim, RegularizationMode reg);
  PolicyParams update(const PolicyParams& current) override;
  [[nodiscard]] std::string name() const override { return "moments"; }
};

class GmmUpdater final : public RiskUpdater {
 public:
  GmmUpdater(Eigen::Index dim, RegularizationMode reg, MomentMap g = MomentMap::MeanAndSecond);
  PolicyParams update(const PolicyParams& current) override;
  [[nodiscard]] std::string name() const override { return "gmm"; }

 private:
  MomentMap g_;
};

class KlUpdater final : public RiskUpdater {
 public:
  KlUpdater(Eigen::Index dim, RegularizationMode reg);
  PolicyParams update(const PolicyParams& current) override;
  [[nodiscard]] std::string name() const override { return "kl"; }
};

/// Requires a scalar integrand.
class VarianceRiskUpdater final : public RiskUpdater {
 public:
  VarianceRiskUpdater(Eigen::Index dim, RegularizationMode reg);
  PolicyParams update(const PolicyParams& current) override;
  [[nodiscard]] std::string name() const override { return "variance_risk"; }
};

std::unique_ptr<PolicyUpdater> make_updater(UpdaterKind kind, Eigen::Index dim,
                                            RegularizationMode reg);

}  // namespace ais

#endif  // AIS_POLICY_UPDATE_HPP
