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

#ifndef AIS_SRC_MINIMIZE_HPP
#define AIS_SRC_MINIMIZE_HPP

#include <functional>
#include <string>

#include "ais/densities.hpp"
#include "ais/policy_update.hpp"

namespace ais::detail {

/// f(theta), writing the gradient when `gradient` is non-null.
using ObjectiveWithGradient = std::function<double(const Vector& theta, Vector* gradient)>;

struct MinimizeResult {
  Vector theta;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Line-search BFGS (Ceres gradient solver) with an absolute gradient tolerance.
MinimizeResult minimize(const ObjectiveWithGradient& objective, const Vector& start,
                        double gradient_tolerance, int max_iterations);

/// Unconstrained coordinates for (mu, L): mu first, then the lower triangle of the Cholesky
/// factor column by column with log-diagonal entries. With FreeParameters::Location, theta = mu.
class ThetaLayout {
 public:
  ThetaLayout(Eigen::Index dim, FreeParameters free) : dim_(dim), free_(free) {}

  [[nodiscard]] Eigen::Index size() const;
  [[nodiscard]] Vector pack(const Vector& mu, const Matrix& chol) const;
  /// `fixed_chol` is used when the scale is not free.
  void unpack(const Vector& theta, const Matrix& fixed_chol, Vector& mu, Matrix& chol) const;
  /// Maps d/dmu and d/dL (lower triangle) to d/dtheta.
  [[nodiscard]] Vector to_theta_gradient(const Vector& grad_mu, const Matrix& grad_chol,
                                         const Matrix& chol) const;

 private:
  Eigen::Index dim_;
  FreeParameters free_;
};

/// log q(x) for the family with location mu and scale L L^T; optionally d/dmu and d/dL.
double log_pdf_from_cholesky(Family family, double dof, const Vector& mu, const Matrix& chol,
                             const Vector& x, Vector* grad_mu, Matrix* grad_chol);

}  // namespace ais::detail

#endif  // AIS_SRC_MINIMIZE_HPP
