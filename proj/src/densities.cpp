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

#include "ais/densities.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace ais {

std::string to_string(Family family) {
  return family == Family::StudentT ? "StudentT" : "Gaussian";
}

Family family_from_string(const std::string& name) {
  if (name == "StudentT" || name == "student" || name == "student_t") {
    return Family::StudentT;
  }
  if (name == "Gaussian" || name == "gaussian") {
    return Family::Gaussian;
  }
  throw std::invalid_argument("unknown policy family '" + name + "'");
}

PolicyParams::PolicyParams(Family family, Vector location, Matrix scale, double dof)
    : family_(family), location_(std::move(location)), scale_(std::move(scale)), dof_(dof) {
  const auto d = location_.size();
  if (d == 0) {
    throw DimensionError("policy dimension must be positive");
  }
  if (scale_.rows() != d || scale_.cols() != d) {
    throw DimensionError("scale matrix is " + std::to_string(scale_.rows()) + "x" +
                         std::to_string(scale_.cols()) + ", expected " + std::to_string(d) + "x" +
                         std::to_string(d));
  }
  if (!location_.allFinite() || !scale_.allFinite()) {
    throw std::invalid_argument("policy parameters must be finite");
  }
  const double asym = (scale_ - scale_.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (1.0 + scale_.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("scale matrix is not symmetric");
  }
  if (family_ == Family::StudentT && !(dof_ > 2.0)) {
    throw std::invalid_argument("Student-t policy requires dof > 2, got " + std::to_string(dof_));
  }
  Eigen::LLT<Matrix> llt(scale_);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("scale matrix is not positive-definite");
  }
  chol_ = llt.matrixL();
  if ((chol_.diagonal().array() <= 0.0).any()) {
    throw std::invalid_argument("scale matrix is not positive-definite");
  }
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();

  const double dd = static_cast<double>(d);
  if (family_ == Family::Gaussian) {
    log_norm_ = -0.5 * dd * std::log(2.0 * std::numbers::pi) - 0.5 * log_det_;
  } else {
    log_norm_ = std::lgamma(0.5 * (dof_ + dd)) - std::lgamma(0.5 * dof_) -
                0.5 * dd * std::log(dof_ * std::numbers::pi) - 0.5 * log_det_;
  }
}

PolicyParams PolicyParams::gaussian(Vector location, Matrix scale) {
  return {Family::Gaussian, std::move(location), std::move(scale)};
}

PolicyParams PolicyParams::student(Vector location, Matrix scale, double dof) {
  return {Family::StudentT, std::move(location), std::move(scale), dof};
}

double PolicyParams::dof() const {
  return family_ == Family::Gaussian ? std::numeric_limits<double>::infinity() : dof_;
}

PolicyParams PolicyParams::with(Vector location, Matrix scale) const {
  return {family_, std::move(location), std::move(scale), dof_};
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  return a.family_ == b.family_ && a.dof() == b.dof() && a.location_ == b.location_ &&
         a.scale_ == b.scale_;
}

double log_pdf(const PolicyParams& params, const Vector& x) {
  if (x.size() != params.dim()) {
    throw DimensionError("point has dimension " + std::to_string(x.size()) +
                         ", policy has dimension " + std::to_string(params.dim()));
  }
  const Vector y =
      params.cholesky().triangularView<Eigen::Lower>().solve(x - params.location());
  const double mahalanobis = y.squaredNorm();
  if (params.family() == Family::Gaussian) {
    return params.log_normalizer() - 0.5 * mahalanobis;
  }
  const double nu = params.dof();
  const double d = static_cast<double>(params.dim());
  return params.log_normalizer() - 0.5 * (nu + d) * std::log1p(mahalanobis / nu);
}

Vector sample_one(const PolicyParams& params, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(params.dim());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    z[k] = normal(rng);
  }
  Vector step = params.cholesky() * z;
  if (params.family() == Family::StudentT) {
    std::chi_squared_distribution<double> chi2(params.dof());
    const double w = chi2(rng);
    step /= std::sqrt(w / params.dof());
  }
  return params.location() + step;
}

std::vector<Vector> sample(const PolicyParams& params, Rng& rng, std::size_t count) {
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_one(params, rng));
  }
  return out;
}

Matrix covariance_of(const PolicyParams& params) {
  if (params.family() == Family::Gaussian) {
    return params.scale();
  }
  const double nu = params.dof();
  return params.scale() * (nu / (nu - 2.0));
}

TargetSpec TargetSpec::gaussian(const Vector& mu, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("Gaussian target requires sigma > 0");
  }
  const double d = static_cast<double>(mu.size());
  const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
  const double inv_var = 1.0 / (sigma * sigma);
  TargetSpec spec;
  spec.kind = Kind::GaussianTarget;
  spec.dim = mu.size();
  spec.unnormalized_log_density = [mu, log_norm, inv_var](const Vector& x) {
    return log_norm - 0.5 * inv_var * (x - mu).squaredNorm();
  };
  spec.normalizing_constant = 1.0;
  return spec;
}

TargetSpec TargetSpec::custom(Eigen::Index dim, std::function<double(const Vector&)> log_density,
                              std::optional<double> normalizing_constant) {
  TargetSpec spec;
  spec.kind = Kind::Custom;
  spec.dim = dim;
  spec.unnormalized_log_density = std::move(log_density);
  spec.normalizing_constant = normalizing_constant;
  return spec;
}

}  // namespace ais
