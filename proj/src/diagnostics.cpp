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

#include "ais/diagnostics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ais {

namespace {

constexpr std::size_t kGrid1d = 4096;
constexpr std::size_t kGrid2d = 256;
constexpr double kHalfWidthSd = 40.0;
constexpr std::ptrdiff_t kChunks = 64;

// Sum over i of weight(i) * (phi/q - I)(phi/q - I)^T q, where `node(i)` yields the point and
// its quadrature weight. Chunks are summed in index order so the result does not depend on the
// number of threads. With times_q, the policy mass seen by the grid is stored in `mass`.
template <class NodeFn>
Matrix weighted_outer_sum(std::size_t count, Eigen::Index p, const PolicyParams& q,
                          const Integrand& phi, const Vector& integral_phi, bool times_q,
                          NodeFn node, double* mass = nullptr) {
  std::vector<Matrix> partial(kChunks, Matrix::Zero(p, p));
  std::vector<double> partial_mass(kChunks, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < kChunks; ++c) {
    const std::ptrdiff_t begin = n * c / kChunks;
    const std::ptrdiff_t end = n * (c + 1) / kChunks;
    for (std::ptrdiff_t i = begin; i < end; ++i) {
      const auto [x, weight] = node(static_cast<std::size_t>(i));
      const double qx = std::exp(log_pdf(q, x));
      const Vector f = phi(x);
      partial_mass[c] += weight * qx;
      if (qx == 0.0) {
        if (f.isZero()) {
          continue;
        }
        partial[c].array() += std::numeric_limits<double>::infinity();
        continue;
      }
      const Vector r = f / qx - integral_phi;
      partial[c].noalias() += (times_q ? weight * qx : weight) * r * r.transpose();
    }
  }
  Matrix total = Matrix::Zero(p, p);
  for (const auto& m : partial) {
    total += m;
  }
  if (mass != nullptr) {
    *mass = 0.0;
    for (double m : partial_mass) {
      *mass += m;
    }
  }
  return 0.5 * (total + total.transpose());
}

}  // namespace

VarianceMatrix asymptotic_variance(const PolicyParams& q, const Integrand& phi,
                                   const Vector& integral_phi, VarianceMethod method,
                                   std::size_t budget, std::uint64_t seed) {
  const auto d = q.dim();
  const auto p = integral_phi.size();
  VarianceMatrix out;
  out.estimator_kind = method;

  if (method == VarianceMethod::MonteCarlo) {
    if (budget == 0) {
      throw std::invalid_argument("Monte Carlo variance needs a positive budget");
    }
    Rng rng(seed);
    const std::vector<Vector> draws = sample(q, rng, budget);
    const double w = 1.0 / static_cast<double>(budget);
    out.matrix = weighted_outer_sum(budget, p, q, phi, integral_phi, false,
                                    [&](std::size_t i) { return std::pair{draws[i], w}; });
    out.n_used = budget;
    return out;
  }

  if (d > 2) {
    throw std::invalid_argument("quadrature variance supports d <= 2 (got d = " +
                                std::to_string(d) + "); use VarianceMethod::MonteCarlo");
  }
  const Vector sd = covariance_of(q).diagonal().cwiseSqrt();
  const Vector lo = q.location() - kHalfWidthSd * sd;
  const std::size_t m = d == 1 ? kGrid1d : kGrid2d;
  const Vector h = 2.0 * kHalfWidthSd * sd / static_cast<double>(m - 1);
  auto trapezoid = [m](std::size_t k) { return (k == 0 || k == m - 1) ? 0.5 : 1.0; };
  double mass = 1.0;

  if (d == 1) {
    out.matrix = weighted_outer_sum(m, p, q, phi, integral_phi, true, [&](std::size_t i) {
      Vector x(1);
      x[0] = lo[0] + h[0] * static_cast<double>(i);
      return std::pair{x, h[0] * trapezoid(i)};
    }, &mass);
    out.n_used = m;
  } else {
    out.matrix = weighted_outer_sum(m * m, p, q, phi, integral_phi, true, [&](std::size_t i) {
      const std::size_t a = i / m;
      const std::size_t b = i % m;
      Vector x(2);
      x[0] = lo[0] + h[0] * static_cast<double>(a);
      x[1] = lo[1] + h[1] * static_cast<double>(b);
      return std::pair{x, h[0] * h[1] * trapezoid(a) * trapezoid(b)};
    }, &mass);
    out.n_used = m * m;
  }
  // Policy mass outside the window is of order 1e-6 for t tails. There phi / q is taken to be
  // its q-weighted mean over the boundary nodes, which is exact for phi proportional to q and
  // gives I I^T times the missing mass for phi decaying faster than q.
  const double missing = std::max(0.0, 1.0 - mass);
  if (missing > 0.0) {
    Vector edge_sum = Vector::Zero(p);
    double edge_q = 0.0;
    auto add_edge = [&](const Vector& x) {
      const double qx = std::exp(log_pdf(q, x));
      if (qx > 0.0) {
        edge_sum += phi(x);
        edge_q += qx;
      }
    };
    for (std::size_t k = 0; k < (d == 1 ? 1 : m); ++k) {
      for (std::size_t side : {std::size_t{0}, m - 1}) {
        Vector x(d);
        if (d == 1) {
          x[0] = lo[0] + h[0] * static_cast<double>(side);
          add_edge(x);
          continue;
        }
        x << lo[0] + h[0] * static_cast<double>(side), lo[1] + h[1] * static_cast<double>(k);
        add_edge(x);
        x << lo[0] + h[0] * static_cast<double>(k), lo[1] + h[1] * static_cast<double>(side);
        add_edge(x);
      }
    }
    const Vector r = (edge_q > 0.0 ? Vector(edge_sum / edge_q) : Vector::Zero(p)) - integral_phi;
    out.matrix += missing * r * r.transpose();
  }
  return out;
}

double delta_method_variance(const VarianceMatrix& v, const Vector& integral_phi_pi) {
  if (integral_phi_pi.size() != 1 || v.matrix.rows() != 2 || v.matrix.cols() != 2) {
    throw DimensionError("delta method expects a 2x2 variance of (phi pi, pi) and a scalar "
                         "integral; got " +
                         std::to_string(v.matrix.rows()) + "x" + std::to_string(v.matrix.cols()) +
                         " and length " + std::to_string(integral_phi_pi.size()));
  }
  Eigen::Vector2d u(1.0, -integral_phi_pi[0]);
  return u.dot(v.matrix * u);
}

double normalized_asymptotic_variance(const PolicyParams& q, const TargetSpec& target,
                                      const Integrand& phi, double integral_phi_pi,
                                      VarianceMethod method, std::size_t budget,
                                      std::uint64_t seed) {
  const double z = target.normalizing_constant.value_or(1.0);
  const Integrand payload = [&](const Vector& x) {
    const double pi = std::exp(target.log_density(x)) / z;
    const Vector f = phi(x);
    if (f.size() != 1) {
      throw DimensionError("normalized variance needs a scalar integrand");
    }
    Vector out(2);
    out << f[0] * pi, pi;
    return out;
  };
  Vector integral(2);
  integral << integral_phi_pi, 1.0;
  const auto v = asymptotic_variance(q, payload, integral, method, budget, seed);
  return delta_method_variance(v, Vector::Constant(1, integral_phi_pi));
}

CltReport confidence_interval(const Vector& estimate, const VarianceMatrix& v_est, std::size_t n,
                              double level) {
  if (n == 0) {
    throw std::invalid_argument("confidence interval needs n >= 1");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("confidence level must lie in (0, 1)");
  }
  if (v_est.matrix.rows() != estimate.size()) {
    throw DimensionError("variance and estimate dimensions differ");
  }
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + 0.5 * level);
  const Vector half =
      z * (v_est.matrix.diagonal().cwiseMax(0.0) / static_cast<double>(n)).cwiseSqrt();
  return {.estimate = estimate,
          .variance = v_est,
          .ci_lower = estimate - half,
          .ci_upper = estimate + half,
          .n = n,
          .level = level};
}

double effective_sample_size(const std::vector<StageRecord>& stages) {
  double total = 0.0;
  for (const auto& stage : stages) {
    total += stage.denominator_sum;
  }
  return total;
}

MartingaleReport martingale_residuals(const std::vector<StageRecord>& stages,
                                      const Vector& truth) {
  MartingaleReport report;
  for (const auto& stage : stages) {
    if (stage.sum_phi_ratio.size() != truth.size()) {
      throw DimensionError("truth dimension does not match the integrand");
    }
    StageResidual r;
    r.stage = stage.stage_index;
    r.n = stage.size;
    const double n = static_cast<double>(stage.size);
    const Vector mean = stage.sum_phi_ratio / n;
    r.mean_residual = mean - truth;
    r.standard_error.resize(truth.size());
    r.standardized.resize(truth.size());
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      if (stage.size < 2) {
        r.standard_error[k] = std::numeric_limits<double>::quiet_NaN();
        r.standardized[k] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const double var =
          std::max(0.0, (stage.sum_phi_ratio_sq[k] - n * mean[k] * mean[k]) / (n - 1.0));
      r.standard_error[k] = std::sqrt(var / n);
      if (r.standard_error[k] > 0.0) {
        r.standardized[k] = r.mean_residual[k] / r.standard_error[k];
      } else {
        r.standardized[k] = r.mean_residual[k] == 0.0
                                ? 0.0
                                : std::copysign(std::numeric_limits<double>::infinity(),
                                                r.mean_residual[k]);
      }
      if (!std::isnan(r.standardized[k])) {
        report.max_abs_standardized =
            std::max(report.max_abs_standardized, std::abs(r.standardized[k]));
      }
    }
    report.stages.push_back(std::move(r));
  }
  return report;
}

Vector empirical_quadratic_variation(const std::vector<StageRecord>& stages, const Vector& truth) {
  Vector sum = Vector::Zero(truth.size());
  Vector sum_sq = Vector::Zero(truth.size());
  double n = 0.0;
  for (const auto& stage : stages) {
    sum += stage.sum_phi_ratio;
    sum_sq += stage.sum_phi_ratio_sq;
    n += static_cast<double>(stage.size);
  }
  if (n == 0.0) {
    throw std::invalid_argument("quadratic variation needs at least one sample");
  }
  return (sum_sq - 2.0 * truth.cwiseProduct(sum)) / n + truth.cwiseAbs2();
}

}  // namespace ais
