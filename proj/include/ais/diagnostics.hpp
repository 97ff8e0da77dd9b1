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

#ifndef AIS_DIAGNOSTICS_HPP
#define AIS_DIAGNOSTICS_HPP

#include <cstdint>
#include <vector>

#include "ais/ais_core.hpp"
#include "ais/densities.hpp"
#include "ais/sample_eval.hpp"

/**
 * \file
 * \brief Asymptotic variance V(q, phi), its delta-method contraction, CLT intervals and
 * martingale checks.
 *
 * V(q, phi) = integral of (phi - q I)(phi - q I)^T / q, with I = integral of phi. It is the
 * per-sample conditional covariance of the increment phi(x) / q(x) - I when x ~ q.
 */

namespace ais {

enum class VarianceMethod { Quadrature, MonteCarlo };

struct VarianceMatrix {
  Matrix matrix;
  VarianceMethod estimator_kind = VarianceMethod::Quadrature;
  std::size_t n_used = 0;
};

/// Quadrature: trapezoid grid of 4096 points (d = 1) or 256^2 (d = 2) spanning the policy
/// location +/- 40 standard deviations. MonteCarlo: mean of Delta Delta^T over `budget` fresh
/// draws from q seeded with `seed`. Quadrature for d > 2 throws std::invalid_argument.
VarianceMatrix asymptotic_variance(const PolicyParams& q, const Integrand& phi,
                                   const Vector& integral_phi, VarianceMethod method,
                                   std::size_t budget = 100000, std::uint64_t seed = 0);

/// u^T V u with u = (1, -integral_phi_pi), for V the variance of the payload (phi pi, pi).
/// Only scalar phi is supported: V must be 2x2 and the integral a 1-vector.
double delta_method_variance(const VarianceMatrix& v, const Vector& integral_phi_pi);

/// u^T V(q, (phi pi, pi)) u for a normalized target density and scalar phi.
double normalized_asymptotic_variance(const PolicyParams& q, const TargetSpec& target,
                                      const Integrand& phi, double integral_phi_pi,
                                      VarianceMethod method, std::size_t budget = 100000,
                                      std::uint64_t seed = 0);

struct CltReport {
  Vector estimate;
  VarianceMatrix variance;
  Vector ci_lower;
  Vector ci_upper;
  std::size_t n = 0;
  double level = 0.95;
};

/// Componentwise estimate +/- z_{(1+level)/2} sqrt(V_ii / n).
CltReport confidence_interval(const Vector& estimate, const VarianceMatrix& v_est, std::size_t n,
                              double level = 0.95);

/// Sum of importance weights pi_u / q over every recorded sample.
double effective_sample_size(const std::vector<StageRecord>& stages);

struct StageResidual {
  std::size_t stage = 0;
  std::size_t n = 0;
  Vector mean_residual;   ///< mean of phi / q - truth over the stage
  Vector standard_error;  ///< sample standard deviation / sqrt(n)
  Vector standardized;    ///< mean_residual / standard_error (0 when both are 0)
};

struct MartingaleReport {
  std::vector<StageResidual> stages;
  double max_abs_standardized = 0.0;
};

/// Per-stage residuals of the martingale increments Delta_j = phi(x_j) / q_{j-1}(x_j) - truth.
MartingaleReport martingale_residuals(const std::vector<StageRecord>& stages, const Vector& truth);

/// Diagonal of <M>_n / n estimated by the mean of Delta_j^2 over all samples.
Vector empirical_quadratic_variation(const std::vector<StageRecord>& stages, const Vector& truth);

}  // namespace ais

#endif  // AIS_DIAGNOSTICS_HPP
