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

#include "minimize.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <cmath>
#include <numbers>

namespace ais::detail {

namespace {

class CeresAdapter final : public ceres::FirstOrderFunction {
 public:
  CeresAdapter(const ObjectiveWithGradient& objective, int size)
      : objective_(objective), size_(size) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    const Vector theta = Eigen::Map<const Vector>(parameters, size_);
    Vector grad;
    const double value = objective_(theta, gradient != nullptr ? &grad : nullptr);
    if (!std::isfinite(value)) {
      return false;
    }
    *cost = value;
    if (gradient != nullptr) {
      if (!grad.allFinite()) {
        return false;
      }
      Eigen::Map<Vector>(gradient, size_) = grad;
    }
    return true;
  }

  int NumParameters() const override { return size_; }

 private:
  const ObjectiveWithGradient& objective_;
  int size_;
};

}  // namespace

MinimizeResult minimize(const ObjectiveWithGradient& objective, const Vector& start,
                        double gradient_tolerance, int max_iterations) {
  MinimizeResult result;
  result.theta = start;
  const int size = static_cast<int>(start.size());

  // GradientProblem takes ownership of the function.
  ceres::GradientProblem problem(new CeresAdapter(objective, size));
  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::BFGS;
  options.use_approximate_eigenvalue_bfgs_scaling = true;
  options.max_num_iterations = max_iterations;
  options.gradient_tolerance = gradient_tolerance;
  options.function_tolerance = 1e-15;
  options.parameter_tolerance = 1e-15;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;

  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, result.theta.data(), &summary);

  Vector grad;
  result.value = objective(result.theta, &grad);
  result.gradient_norm = grad.size() > 0 ? grad.norm() : 0.0;
  result.iterations = static_cast<int>(summary.iterations.size());
  result.converged = summary.termination_type == ceres::CONVERGENCE;
  result.message = summary.message;
  return result;
}

Eigen::Index ThetaLayout::size() const {
  return free_ == FreeParameters::Location ? dim_ : dim_ + dim_ * (dim_ + 1) / 2;
}

Vector ThetaLayout::pack(const Vector& mu, const Matrix& chol) const {
  Vector theta(size());
  theta.head(dim_) = mu;
  if (free_ == FreeParameters::Location) {
    return theta;
  }
  Eigen::Index k = dim_;
  for (Eigen::Index j = 0; j < dim_; ++j) {
    theta[k++] = std::log(chol(j, j));
    for (Eigen::Index i = j + 1; i < dim_; ++i) {
      theta[k++] = chol(i, j);
    }
  }
  return theta;
}

void ThetaLayout::unpack(const Vector& theta, const Matrix& fixed_chol, Vector& mu,
                         Matrix& chol) const {
  mu = theta.head(dim_);
  if (free_ == FreeParameters::Location) {
    chol = fixed_chol;
    return;
  }
  chol = Matrix::Zero(dim_, dim_);
  Eigen::Index k = dim_;
  for (Eigen::Index j = 0; j < dim_; ++j) {
    chol(j, j) = std::exp(theta[k++]);
    for (Eigen::Index i = j + 1; i < dim_; ++i) {
      chol(i, j) = theta[k++];
    }
  }
}

Vector ThetaLayout::to_theta_gradient(const Vector& grad_mu, const Matrix& grad_chol,
                                      const Matrix& chol) const {
  Vector g(size());
  g.head(dim_) = grad_mu;
  if (free_ == FreeParameters::Location) {
    return g;
  }
  Eigen::Index k = dim_;
  for (Eigen::Index j = 0; j < dim_; ++j) {
    g[k++] = grad_chol(j, j) * chol(j, j);
    for (Eigen::Index i = j + 1; i < dim_; ++i) {
      g[k++] = grad_chol(i, j);
    }
  }
  return g;
}

double log_pdf_from_cholesky(Family family, double dof, const Vector& mu, const Matrix& chol,
                             const Vector& x, Vector* grad_mu, Matrix* grad_chol) {
  const auto d = mu.size();
  const double dd = static_cast<double>(d);
  const auto lower = chol.triangularView<Eigen::Lower>();
  const Vector y = lower.solve(x - mu);
  const double delta = y.squaredNorm();
  const double log_det_half = chol.diagonal().array().log().sum();

  double value = 0.0;
  double kappa = 1.0;
  if (family == Family::Gaussian) {
    value = -0.5 * dd * std::log(2.0 * std::numbers::pi) - log_det_half - 0.5 * delta;
  } else {
    value = std::lgamma(0.5 * (dof + dd)) - std::lgamma(0.5 * dof) -
            0.5 * dd * std::log(dof * std::numbers::pi) - log_det_half -
            0.5 * (dof + dd) * std::log1p(delta / dof);
    kappa = (dof + dd) / (dof + delta);
  }

  if (grad_mu != nullptr || grad_chol != nullptr) {
    // v = Sigma^{-1} (x - mu)
    const Vector v = lower.transpose().solve(y);
    if (grad_mu != nullptr) {
      *grad_mu = kappa * v;
    }
    if (grad_chol != nullptr) {
      Matrix g = kappa * v * y.transpose();
      for (Eigen::Index i = 0; i < d; ++i) {
        g(i, i) -= 1.0 / chol(i, i);
      }
      *grad_chol = g.triangularView<Eigen::Lower>();
    }
  }
  return value;
}

}  // namespace ais::detail
