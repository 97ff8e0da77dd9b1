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

#ifndef AIS_DENSITIES_HPP
#define AIS_DENSITIES_HPP

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * \file
 * \brief Parametric sampling-policy families (multivariate Student-t and Gaussian) and targets.
 */

namespace ais {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Raised when two objects that must share a dimension do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Family { StudentT, Gaussian };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

/// Location/scale/shape parameters of a sampling density.
/**
 * The Student-t family is parametrized by its scale matrix, not its covariance;
 * `covariance_of` converts. The degrees of freedom are ignored for the Gaussian family.
 * Instances are immutable and validated at construction: the scale must be symmetric
 * positive-definite and, for Student-t, dof > 2.
 */
class PolicyParams {
 public:
  PolicyParams(Family family, Vector location, Matrix scale, double dof = 3.0);

  static PolicyParams gaussian(Vector location, Matrix scale);
  static PolicyParams student(Vector location, Matrix scale, double dof);

  [[nodiscard]] Family family() const { return family_; }
  [[nodiscard]] const Vector& location() const { return location_; }
  [[nodiscard]] const Matrix& scale() const { return scale_; }
  /// Degrees of freedom; +infinity for the Gaussian family.
  [[nodiscard]] double dof() const;
  [[nodiscard]] Eigen::Index dim() const { return location_.size(); }

  /// Lower Cholesky factor L with L L^T = scale.
  [[nodiscard]] const Matrix& cholesky() const { return chol_; }
  [[nodiscard]] double log_det_scale() const { return log_det_; }
  /// Log of the density normalizer, so that log q(x) = log_normalizer - kernel(x).
  [[nodiscard]] double log_normalizer() const { return log_norm_; }

  /// Same family and shape with a new location and scale.
  [[nodiscard]] PolicyParams with(Vector location, Matrix scale) const;

  friend bool operator==(const PolicyParams& a, const PolicyParams& b);

 private:
  Family family_;
  Vector location_;
  Matrix scale_;
  double dof_;
  Matrix chol_;
  double log_det_ = 0.0;
  double log_norm_ = 0.0;
};

/// log q(x). Throws DimensionError when x does not match the policy dimension.
double log_pdf(const PolicyParams& params, const Vector& x);

/// One draw from q. Gaussian: mu + L z. Student-t: mu + L z / sqrt(w / nu) with w ~ chi2(nu).
/**
 * Distribution objects are created per draw so that drawing a batch of n points consumes the
 * generator exactly like n single draws.
 */
Vector sample_one(const PolicyParams& params, Rng& rng);

std::vector<Vector> sample(const PolicyParams& params, Rng& rng, std::size_t count);

/// Gaussian: scale. Student-t: scale * nu / (nu - 2).
Matrix covariance_of(const PolicyParams& params);

/// Unnormalized target density pi_u, known through its logarithm.
struct TargetSpec {
  enum class Kind { GaussianTarget, Custom };

  Kind kind = Kind::Custom;
  Eigen::Index dim = 0;
  std::function<double(const Vector&)> unnormalized_log_density;
  /// Known only for test targets; estimators never read it.
  std::optional<double> normalizing_constant;

  [[nodiscard]] double log_density(const Vector& x) const { return unnormalized_log_density(x); }

  /// Isotropic N(mu, sigma^2 I), normalized.
  static TargetSpec gaussian(const Vector& mu, double sigma);
  static TargetSpec custom(Eigen::Index dim, std::function<double(const Vector&)> log_density,
                           std::optional<double> normalizing_constant = std::nullopt);
};

}  // namespace ais

#endif  // AIS_DENSITIES_HPP
