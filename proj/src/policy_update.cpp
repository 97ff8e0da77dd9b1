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

#include "ais/policy_update.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "minimize.hpp"

namespace ais {

namespace {

double shape_factor(double dof) {
  return std::isinf(dof) ? 1.0 : (dof - 2.0) / dof;
}

double moment_factor(double dof) {
  return std::isinf(dof) ? 1.0 : dof / (dof - 2.0);
}

void require_weight(const RiskAccumulator& acc) {
  if (!(acc.sum_weights() > 0.0)) {
    throw UpdateError("total weight collapse: sum of f/q is " + std::to_string(acc.sum_weights()));
  }
}

std::optional<Matrix> cholesky_if_pd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) {
    return std::nullopt;
  }
  Matrix l = llt.matrixL();
  if ((l.diagonal().array() <= 0.0).any() || !l.allFinite()) {
    return std::nullopt;
  }
  return l;
}

double log_sum_exp(const std::vector<double>& values) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    top = std::max(top, v);
  }
  if (!std::isfinite(top)) {
    return top;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += std::exp(v - top);
  }
  return top + std::log(sum);
}

// Runs the minimizer from each start and keeps the lowest converged value. Ties go to the
// earlier start, so listing the current theta first returns it on flat objectives.
PolicyFit minimize_multistart(const detail::ThetaLayout& layout,
                              const detail::ObjectiveWithGradient& objective,
                              const std::vector<Vector>& starts, const Matrix& fixed_chol,
                              const MinimizerOptions& options, const std::string& what) {
  std::optional<detail::MinimizeResult> best;
  detail::MinimizeResult last;
  for (const auto& start : starts) {
    auto result =
        detail::minimize(objective, start, options.gradient_tolerance, options.max_iterations);
    if (result.converged && (!best || result.value < best->value)) {
      best = result;
    }
    last = std::move(result);
  }
  if (!best) {
    throw UpdateError(what + ": minimizer did not converge (" + last.message + ")", last.theta,
                      last.gradient_norm);
  }
  PolicyFit fit;
  Matrix chol;
  layout.unpack(best->theta, fixed_chol, fit.location, chol);
  fit.scale = chol * chol.transpose();
  fit.objective = best->value;
  fit.iterations = best->iterations;
  fit.gradient_norm = best->gradient_norm;
  return fit;
}

std::vector<Vector> starts_for(const detail::ThetaLayout& layout, const PolicyParams& current,
                               FreeParameters free, const RiskAccumulator& acc,
                               const MinimizerOptions& options) {
  std::vector<Vector> starts;
  if (options.start_from_current) {
    starts.push_back(layout.pack(current.location(), current.cholesky()));
  }
  if (options.start_from_moments && acc.sum_weights() > 0.0) {
    if (free == FreeParameters::Location) {
      starts.push_back(layout.pack(acc.weighted_mean(), current.cholesky()));
    } else if (auto chol = cholesky_if_pd(shape_factor(current.dof()) * acc.centered_scatter() /
                                          acc.sum_weights())) {
      starts.push_back(layout.pack(acc.weighted_mean(), *chol));
    }
  }
  if (starts.empty()) {
    throw std::invalid_argument("minimizer options disable every starting point");
  }
  return starts;
}

void require_retained(const RiskAccumulator& acc, const char* what) {
  if (!acc.retains_samples()) {
    throw std::invalid_argument(std::string(what) + " requires an accumulator retaining samples");
  }
}

}  // namespace

UpdateError::UpdateError(const std::string& what, Vector last_iterate, double gradient_norm)
    : std::runtime_error(what),
      last_iterate_(std::move(last_iterate)),
      gradient_norm_(gradient_norm) {}

std::string to_string(RegularizationKind kind) {
  switch (kind) {
    case RegularizationKind::SigFull:
      return "sig_1";
    case RegularizationKind::SigDiag:
      return "sig_1/2";
    case RegularizationKind::SigFixed:
      return "sig_0";
  }
  return "?";
}

RegularizationKind regularization_from_string(const std::string& name) {
  if (name == "sig_1" || name == "SigFull") {
    return RegularizationKind::SigFull;
  }
  if (name == "sig_1/2" || name == "SigDiag") {
    return RegularizationKind::SigDiag;
  }
  if (name == "sig_0" || name == "SigFixed") {
    return RegularizationKind::SigFixed;
  }
  throw std::invalid_argument("unknown regularization mode '" + name + "'");
}

Matrix regularize_covariance(const Matrix& sigma, double n_eff, const RegularizationMode& reg,
                             double dof) {
  if (!(reg.sigma0 > 0.0)) {
    throw std::invalid_argument("sigma0 must be positive");
  }
  const auto d = sigma.rows();
  const Matrix identity = Matrix::Identity(d, d);
  if (reg.mode == RegularizationKind::SigFixed) {
    return reg.sigma0 * shape_factor(dof) * identity;
  }
  const double ridge = reg.sigma0 / std::sqrt(std::max(1.0, n_eff));
  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  if (reg.mode == RegularizationKind::SigDiag) {
    return Matrix(sym.diagonal().asDiagonal()) + ridge * identity;
  }
  return sym + ridge * identity;
}

double risk_increment(double m_value, double log_q) {
  return m_value * std::exp(-log_q);
}

RiskAccumulator::RiskAccumulator(RiskKind kind, Eigen::Index dim, bool retain_samples)
    : kind_(kind),
      dim_(dim),
      retain_(retain_samples || kind == RiskKind::VarianceRisk),
      mean_(Vector::Zero(dim)),
      scatter_(Matrix::Zero(dim, dim)) {}

void RiskAccumulator::accumulate(const Vector& x, double log_q, double log_f,
                                 const Vector& integrand) {
  if (x.size() != dim_) {
    throw DimensionError("accumulated point has dimension " + std::to_string(x.size()) +
                         ", accumulator has " + std::to_string(dim_));
  }
  double phi = 0.0;
  if (kind_ == RiskKind::VarianceRisk) {
    if (integrand.size() != 1) {
      throw DimensionError("variance risk requires a scalar integrand, got dimension " +
                           std::to_string(integrand.size()));
    }
    phi = integrand[0];
    if (!std::isfinite(phi)) {
      throw std::domain_error("non-finite integrand value in variance risk");
    }
  }
  const double w = std::exp(log_f - log_q);
  if (!std::isfinite(w)) {
    throw std::domain_error("non-finite importance weight (log f = " + std::to_string(log_f) +
                            ", log q = " + std::to_string(log_q) + ")");
  }
  ++count_;
  if (w > 0.0) {
    sum_w_ += w;
    const Vector delta = x - mean_;
    mean_ += (w / sum_w_) * delta;
    scatter_.noalias() += w * delta * (x - mean_).transpose();
  }
  if (retain_) {
    samples_.push_back({x, log_q, log_f, phi});
  }
}

PolicyFit update_student_moments(const RiskAccumulator& acc, double nu) {
  require_weight(acc);
  if (!(nu > 2.0)) {
    throw std::invalid_argument("moment matching requires nu > 2");
  }
  PolicyFit fit;
  fit.location = acc.weighted_mean();
  fit.scale = shape_factor(nu) * acc.centered_scatter() / acc.sum_weights();
  return fit;
}

double gmm_objective(const RiskAccumulator& acc, const PolicyParams& candidate, MomentMap g) {
  require_weight(acc);
  const Vector& m = acc.weighted_mean();
  double value = (candidate.location() - m).squaredNorm();
  if (g == MomentMap::MeanAndSecond) {
    const Vector& mu = candidate.location();
    const Matrix second_gap = moment_factor(candidate.dof()) * candidate.scale() +
                              mu * mu.transpose() - acc.centered_scatter() / acc.sum_weights() -
                              m * m.transpose();
    value += second_gap.squaredNorm();
  }
  return value;
}

PolicyFit update_gmm(const RiskAccumulator& acc, const PolicyParams& current, MomentMap g,
                     const MinimizerOptions& options) {
  require_weight(acc);
  const auto free =
      g == MomentMap::Mean ? FreeParameters::Location : FreeParameters::LocationAndScale;
  const detail::ThetaLayout layout(acc.dim(), free);
  const Vector m = acc.weighted_mean();
  const Matrix second = acc.centered_scatter() / acc.sum_weights() + m * m.transpose();
  const double c = moment_factor(current.dof());
  const Matrix& fixed_chol = current.cholesky();

  const detail::ObjectiveWithGradient objective = [&](const Vector& theta, Vector* gradient) {
    Vector mu;
    Matrix chol;
    layout.unpack(theta, fixed_chol, mu, chol);
    double value = (mu - m).squaredNorm();
    Vector grad_mu = 2.0 * (mu - m);
    Matrix grad_chol = Matrix::Zero(mu.size(), mu.size());
    if (g == MomentMap::MeanAndSecond) {
      const Matrix gap = c * chol * chol.transpose() + mu * mu.transpose() - second;
      value += gap.squaredNorm();
      grad_mu += 4.0 * gap * mu;
      grad_chol = (4.0 * c * gap * chol).triangularView<Eigen::Lower>();
    }
    if (gradient != nullptr) {
      *gradient = layout.to_theta_gradient(grad_mu, grad_chol, chol);
    }
    return value;
  };

  std::vector<Vector> starts;
  if (options.start_from_current) {
    starts.push_back(layout.pack(current.location(), current.cholesky()));
  }
  if (options.start_from_moments) {
    if (free == FreeParameters::Location) {
      starts.push_back(layout.pack(m, fixed_chol));
    } else if (auto chol = cholesky_if_pd(acc.centered_scatter() / (c * acc.sum_weights()))) {
      starts.push_back(layout.pack(m, *chol));
    }
  }
  if (starts.empty()) {
    throw std::invalid_argument("minimizer options disable every starting point");
  }
  return minimize_multistart(layout, objective, starts, fixed_chol, options, "GMM update");
}

double kl_risk(const RiskAccumulator& acc, const PolicyParams& candidate) {
  require_retained(acc, "KL risk");
  double risk = 0.0;
  for (const auto& s : acc.retained()) {
    risk -= log_pdf(candidate, s.point) * std::exp(s.log_f - s.log_q);
  }
  return risk;
}

PolicyFit update_kl(const RiskAccumulator& acc, const PolicyParams& current, FreeParameters free,
                    const MinimizerOptions& options, bool force_generic) {
  require_weight(acc);
  if (current.family() == Family::Gaussian && !force_generic) {
    PolicyFit fit = update_student_moments(acc, std::numeric_limits<double>::infinity());
    if (free == FreeParameters::Location) {
      fit.scale = current.scale();
    }
    return fit;
  }
  require_retained(acc, "KL update");

  const detail::ThetaLayout layout(acc.dim(), free);
  const Matrix& fixed_chol = current.cholesky();
  const auto& samples = acc.retained();
  std::vector<double> weights;
  weights.reserve(samples.size());
  for (const auto& s : samples) {
    weights.push_back(std::exp(s.log_f - s.log_q) / acc.sum_weights());
  }

  // -(1 / sum w) sum_j w_j log q_theta(x_j): same minimizer as the risk, unit-free gradient.
  const detail::ObjectiveWithGradient objective = [&](const Vector& theta, Vector* gradient) {
    Vector mu;
    Matrix chol;
    layout.unpack(theta, fixed_chol, mu, chol);
    const auto d = mu.size();
    double value = 0.0;
    Vector grad_mu = Vector::Zero(d);
    Matrix grad_chol = Matrix::Zero(d, d);
    Vector gm;
    Matrix gl;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (weights[i] == 0.0) {
        continue;
      }
      value -= weights[i] * detail::log_pdf_from_cholesky(
                                current.family(), current.dof(), mu, chol, samples[i].point,
                                gradient != nullptr ? &gm : nullptr,
                                gradient != nullptr && free == FreeParameters::LocationAndScale
                                    ? &gl
                                    : nullptr);
      if (gradient != nullptr) {
        grad_mu -= weights[i] * gm;
        if (free == FreeParameters::LocationAndScale) {
          grad_chol -= weights[i] * gl;
        }
      }
    }
    if (gradient != nullptr) {
      *gradient = layout.to_theta_gradient(grad_mu, grad_chol, chol);
    }
    return value;
  };

  auto fit = minimize_multistart(layout, objective, starts_for(layout, current, free, acc, options),
                                 fixed_chol, options, "KL update");
  fit.objective *= acc.sum_weights();
  return fit;
}

double variance_risk(const RiskAccumulator& acc, const PolicyParams& candidate) {
  require_retained(acc, "variance risk");
  double risk = 0.0;
  for (const auto& s : acc.retained()) {
    risk += s.phi * s.phi * std::exp(-log_pdf(candidate, s.point) - s.log_q);
  }
  return risk;
}

PolicyFit update_variance_risk(const RiskAccumulator& acc, const PolicyParams& current,
                               FreeParameters free, const MinimizerOptions& options) {
  if (acc.kind() != RiskKind::VarianceRisk) {
    throw std::invalid_argument("variance update requires a VarianceRisk accumulator");
  }
  const auto& samples = acc.retained();
  std::vector<double> log_payload;
  log_payload.reserve(samples.size());
  bool flat = true;
  for (const auto& s : samples) {
    if (s.phi != 0.0) {
      flat = false;
    }
    log_payload.push_back(s.phi != 0.0 ? 2.0 * std::log(std::abs(s.phi)) - s.log_q
                                       : -std::numeric_limits<double>::infinity());
  }
  if (flat) {
    PolicyFit fit;
    fit.location = current.location();
    fit.scale = current.scale();
    fit.kept_previous = true;
    return fit;
  }

  const detail::ThetaLayout layout(acc.dim(), free);
  const Matrix& fixed_chol = current.cholesky();

  // Rescale so the objective equals 1 at the current policy.
  std::vector<double> at_current(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    at_current[i] = log_payload[i] - log_pdf(current, samples[i].point);
  }
  const double log_scale = log_sum_exp(at_current);

  const detail::ObjectiveWithGradient objective = [&](const Vector& theta, Vector* gradient) {
    Vector mu;
    Matrix chol;
    layout.unpack(theta, fixed_chol, mu, chol);
    const auto d = mu.size();
    double value = 0.0;
    Vector grad_mu = Vector::Zero(d);
    Matrix grad_chol = Matrix::Zero(d, d);
    Vector gm;
    Matrix gl;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (std::isinf(log_payload[i])) {
        continue;
      }
      const double lq = detail::log_pdf_from_cholesky(
          current.family(), current.dof(), mu, chol, samples[i].point,
          gradient != nullptr ? &gm : nullptr,
          gradient != nullptr && free == FreeParameters::LocationAndScale ? &gl : nullptr);
      const double term = std::exp(log_payload[i] - lq - log_scale);
      value += term;
      if (gradient != nullptr) {
        grad_mu -= term * gm;
        if (free == FreeParameters::LocationAndScale) {
          grad_chol -= term * gl;
        }
      }
    }
    if (gradient != nullptr) {
      *gradient = layout.to_theta_gradient(grad_mu, grad_chol, chol);
    }
    return value;
  };

  std::vector<Vector> starts;
  if (options.start_from_current) {
    starts.push_back(layout.pack(current.location(), current.cholesky()));
  }
  if (options.start_from_moments && acc.sum_weights() > 0.0) {
    starts.push_back(layout.pack(acc.weighted_mean(), current.cholesky()));
  }
  if (starts.empty()) {
    throw std::invalid_argument("minimizer options disable every starting point");
  }
  auto fit = minimize_multistart(layout, objective, starts, fixed_chol, options, "variance update");
  fit.objective *= std::exp(log_scale);
  return fit;
}

std::string to_string(UpdaterKind kind) {
  switch (kind) {
    case UpdaterKind::Identity:
      return "identity";
    case UpdaterKind::Moments:
      return "moments";
    case UpdaterKind::Gmm:
      return "gmm";
    case UpdaterKind::KL:
      return "kl";
    case UpdaterKind::VarianceRisk:
      return "variance_risk";
  }
  return "?";
}

UpdaterKind updater_from_string(const std::string& name) {
  for (auto kind : {UpdaterKind::Identity, UpdaterKind::Moments, UpdaterKind::Gmm,
                    UpdaterKind::KL, UpdaterKind::VarianceRisk}) {
    if (to_string(kind) == name) {
      return kind;
    }
  }
  throw std::invalid_argument("unknown updater '" + name + "'");
}

RiskUpdater::RiskUpdater(RiskKind kind, Eigen::Index dim, bool retain, RegularizationMode reg)
    : acc_(kind, dim, retain), reg_(reg) {
  if (!(reg_.sigma0 > 0.0)) {
    throw std::invalid_argument("sigma0 must be positive");
  }
}

FreeParameters RiskUpdater::free_parameters() const {
  return reg_.mode == RegularizationKind::SigFixed ? FreeParameters::Location
                                                   : FreeParameters::LocationAndScale;
}

PolicyParams RiskUpdater::working_policy(const PolicyParams& current) const {
  if (reg_.mode != RegularizationKind::SigFixed) {
    return current;
  }
  return current.with(current.location(),
                      regularize_covariance(current.scale(), 0.0, reg_, current.dof()));
}

PolicyParams RiskUpdater::finish(const PolicyParams& current, const PolicyFit& fit) const {
  if (fit.kept_previous) {
    return current;
  }
  Matrix scale = regularize_covariance(fit.scale, acc_.sum_weights(), reg_, current.dof());
  try {
    return current.with(fit.location, std::move(scale));
  } catch (const std::invalid_argument& e) {
    throw UpdateError(std::string("updated policy is invalid: ") + e.what(), fit.location);
  }
}

PolicyParams RiskUpdater::fallback(const PolicyParams& current) const {
  if (!(acc_.sum_weights() > 0.0)) {
    return current;
  }
  try {
    return finish(current, update_student_moments(acc_, current.dof()));
  } catch (const std::exception&) {
    return current;
  }
}

MomentUpdater::MomentUpdater(Eigen::Index dim, RegularizationMode reg)
    : RiskUpdater(RiskKind::Moments, dim, false, reg) {}

PolicyParams MomentUpdater::update(const PolicyParams& current) {
  return finish(current, update_student_moments(acc_, current.dof()));
}

GmmUpdater::GmmUpdater(Eigen::Index dim, RegularizationMode reg, MomentMap g)
    : RiskUpdater(RiskKind::Gmm, dim, false, reg), g_(g) {}

PolicyParams GmmUpdater::update(const PolicyParams& current) {
  // With a fixed scale only the location is identified, so only g(x) = x is matched.
  const MomentMap g = reg_.mode == RegularizationKind::SigFixed ? MomentMap::Mean : g_;
  return finish(current, update_gmm(acc_, working_policy(current), g));
}

KlUpdater::KlUpdater(Eigen::Index dim, RegularizationMode reg)
    : RiskUpdater(RiskKind::KL, dim, true, reg) {}

PolicyParams KlUpdater::update(const PolicyParams& current) {
  return finish(current, update_kl(acc_, working_policy(current), free_parameters()));
}

VarianceRiskUpdater::VarianceRiskUpdater(Eigen::Index dim, RegularizationMode reg)
    : RiskUpdater(RiskKind::VarianceRisk, dim, true, reg) {}

PolicyParams VarianceRiskUpdater::update(const PolicyParams& current) {
  return finish(current, update_variance_risk(acc_, working_policy(current), free_parameters()));
}

std::unique_ptr<PolicyUpdater> make_updater(UpdaterKind kind, Eigen::Index dim,
                                            RegularizationMode reg) {
  switch (kind) {
    case UpdaterKind::Identity:
      return std::make_unique<IdentityUpdater>();
    case UpdaterKind::Moments:
      return std::make_unique<MomentUpdater>(dim, reg);
    case UpdaterKind::Gmm:
      return std::make_unique<GmmUpdater>(dim, reg);
    case UpdaterKind::KL:
      return std::make_unique<KlUpdater>(dim, reg);
    case UpdaterKind::VarianceRisk:
      return std::make_unique<VarianceRiskUpdater>(dim, reg);
  }
  throw std::invalid_argument("unknown updater kind");
}

}  // namespace ais
