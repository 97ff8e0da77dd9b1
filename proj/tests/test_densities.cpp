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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ais/densities.hpp"
#include "oracles.hpp"

namespace {

using ais::Matrix;
using ais::PolicyParams;
using ais::Vector;
namespace oracle = ais::testing;

Vector v1(double x) { return Vector::Constant(1, x); }
Matrix m1(double x) { return Matrix::Constant(1, 1, x); }

TEST(LogPdf, StandardNormalAtMode) {
  const auto q = PolicyParams::gaussian(v1(0.0), m1(1.0));
  EXPECT_NEAR(ais::log_pdf(q, v1(0.0)), -0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(ais::log_pdf(q, v1(0.0)), -0.91894, 1e-5);
}

TEST(LogPdf, StudentThreeAtMode) {
  const auto q = PolicyParams::student(v1(0.0), m1(1.0), 3.0);
  const double expected =
      std::log(std::tgamma(2.0) / (std::sqrt(3.0 * std::numbers::pi) * std::tgamma(1.5)));
  EXPECT_NEAR(ais::log_pdf(q, v1(0.0)), expected, 1e-13);
  EXPECT_NEAR(ais::log_pdf(q, v1(0.0)), std::log(2.0 / (std::numbers::pi * std::sqrt(3.0))), 1e-13);
}

TEST(LogPdf, MultivariateMatchesExplicitFormula) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 4;
    Matrix a(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        a(i, j) = normal(rng);
      }
    }
    const Matrix scale = a * a.transpose() + 0.5 * Matrix::Identity(d, d);
    Vector mu(d);
    Vector x(d);
    for (int i = 0; i < d; ++i) {
      mu[i] = normal(rng);
      x[i] = mu[i] + 2.0 * normal(rng);
    }
    const double nu = 2.5 + trial;
    const auto t = PolicyParams::student(mu, scale, nu);
    const auto g = PolicyParams::gaussian(mu, scale);
    EXPECT_NEAR(ais::log_pdf(t, x), std::log(oracle::student_pdf_mv(x, mu, scale, nu)), 1e-10);
    EXPECT_NEAR(ais::log_pdf(g, x), std::log(oracle::normal_pdf_mv(x, mu, scale)), 1e-10);
  }
}

TEST(LogPdf, EllipticalSymmetry) {
  Matrix scale(2, 2);
  scale << 2.0, 0.7, 0.7, 1.0;
  const Vector mu = Vector::Constant(2, 1.5);
  const auto q = PolicyParams::student(mu, scale, 3.0);
  Vector v(2);
  v << 0.3, -2.2;
  EXPECT_DOUBLE_EQ(ais::log_pdf(q, mu + v), ais::log_pdf(q, mu - v));
}

TEST(LogPdf, FiniteFarInTheTails) {
  const auto g = PolicyParams::gaussian(Vector::Zero(16), Matrix::Identity(16, 16));
  const auto t = PolicyParams::student(Vector::Zero(16), Matrix::Identity(16, 16), 3.0);
  const Vector far = Vector::Constant(16, 30.0);
  EXPECT_TRUE(std::isfinite(ais::log_pdf(g, far)));
  EXPECT_TRUE(std::isfinite(ais::log_pdf(t, far)));
}

TEST(LogPdf, DimensionMismatchThrows) {
  const auto q = PolicyParams::gaussian(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(ais::log_pdf(q, v1(0.0)), ais::DimensionError);
}

TEST(PolicyParams, RejectsInvalidParameters) {
  Matrix not_spd(2, 2);
  not_spd << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(PolicyParams::gaussian(Vector::Zero(2), not_spd), std::invalid_argument);
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(PolicyParams::gaussian(Vector::Zero(2), asym), std::invalid_argument);
  EXPECT_THROW(PolicyParams::student(v1(0.0), m1(1.0), 2.0), std::invalid_argument);
  EXPECT_THROW(PolicyParams::gaussian(Vector::Zero(2), Matrix::Identity(3, 3)),
               ais::DimensionError);
}

TEST(Normalization, GaussianQuadratureIsOne) {
  const auto q = PolicyParams::gaussian(v1(1.0), m1(4.0));
  const double mass = oracle::simpson(
      [&](double x) { return std::exp(ais::log_pdf(q, v1(x))); }, 1.0 - 100.0, 1.0 + 100.0, 200000);
  EXPECT_NEAR(mass, 1.0, 1e-6);
}

TEST(Normalization, StudentQuadratureMatchesClosedFormCdf) {
  // A t_3 puts about 1.8e-5 of its mass beyond 50 scale units, so the window mass is compared
  // with the closed-form CDF rather than with 1.
  const auto q = PolicyParams::student(v1(0.0), m1(1.0), 3.0);
  const double half_width = 50.0;
  const double mass = oracle::simpson([&](double x) { return std::exp(ais::log_pdf(q, v1(x))); },
                                      -half_width, half_width, 200000);
  const double expected = 2.0 * oracle::student3_cdf(half_width) - 1.0;
  EXPECT_NEAR(mass, expected, 1e-9);
  EXPECT_NEAR(mass, 1.0, 2e-5);
}

TEST(Sample, CountZeroIsEmpty) {
  ais::Rng rng(1);
  EXPECT_TRUE(ais::sample(PolicyParams::gaussian(v1(0.0), m1(1.0)), rng, 0).empty());
}

TEST(Sample, GaussianMeanWithinClt) {
  ais::Rng rng(11);
  const auto xs = ais::sample(PolicyParams::gaussian(v1(5.0), m1(1.0)), rng, 100000);
  EXPECT_NEAR(oracle::sample_mean(xs)[0], 5.0, 4.0 / std::sqrt(1e5));
}

TEST(Sample, StudentVarianceNearNuOverNuMinusTwo) {
  ais::Rng rng(12);
  const auto xs = ais::sample(PolicyParams::student(v1(0.0), m1(1.0), 3.0), rng, 100000);
  double ss = 0.0;
  const double m = oracle::sample_mean(xs)[0];
  for (const auto& x : xs) {
    ss += (x[0] - m) * (x[0] - m);
  }
  const double var = ss / (xs.size() - 1.0);
  EXPECT_NEAR(var, 3.0, 0.15 * 3.0);
}

TEST(Sample, MultivariateMomentsMatch) {
  Matrix scale(2, 2);
  scale << 1.0, 0.6, 0.6, 2.0;
  Vector mu(2);
  mu << -1.0, 3.0;
  const auto q = PolicyParams::student(mu, scale, 6.0);
  ais::Rng rng(13);
  const auto xs = ais::sample(q, rng, 100000);
  const auto moments = oracle::weighted_moments(xs, std::vector<double>(xs.size(), 1.0));
  const Matrix cov = moments.scatter / static_cast<double>(xs.size());
  const Matrix expected = ais::covariance_of(q);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(moments.mean[i], mu[i], 4.0 * std::sqrt(expected(i, i) / 1e5));
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(cov(i, j), expected(i, j), 0.05 * expected.diagonal().maxCoeff());
    }
  }
}

TEST(Sample, ReproducibleAndBatchMatchesSingles) {
  const auto q = PolicyParams::student(Vector::Zero(3), Matrix::Identity(3, 3), 3.0);
  ais::Rng a(99);
  ais::Rng b(99);
  ais::Rng c(99);
  const auto batch = ais::sample(q, a, 50);
  const auto again = ais::sample(q, b, 50);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(batch[i], again[i]);
    EXPECT_EQ(batch[i], ais::sample_one(q, c));
  }
}

TEST(CovarianceOf, Examples) {
  EXPECT_TRUE(ais::covariance_of(PolicyParams::gaussian(Vector::Zero(3), Matrix::Identity(3, 3)))
                  .isApprox(Matrix::Identity(3, 3)));
  const auto third = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2) / 3.0, 3.0);
  EXPECT_TRUE(ais::covariance_of(third).isApprox(Matrix::Identity(2, 2), 1e-14));
  const auto nu4 = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2), 4.0);
  EXPECT_TRUE(ais::covariance_of(nu4).isApprox(2.0 * Matrix::Identity(2, 2), 1e-14));
}

TEST(CovarianceOf, PaperInitialScaleGivesSigmaZeroCovariance) {
  // Scale sigma0 (nu - 2) / nu with nu = 3 has covariance sigma0 I.
  const auto q0 = PolicyParams::student(Vector::Zero(2), Matrix::Identity(2, 2) * 5.0 / 3.0, 3.0);
  EXPECT_TRUE(ais::covariance_of(q0).isApprox(5.0 * Matrix::Identity(2, 2), 1e-14));
}

TEST(TargetSpec, GaussianIsNormalizedDensity) {
  Vector mu(2);
  mu << 5.0, 5.0;
  const auto target = ais::TargetSpec::gaussian(mu, 1.5);
  Vector x(2);
  x << 4.0, 6.5;
  EXPECT_NEAR(target.log_density(x),
              std::log(oracle::normal_pdf_mv(x, mu, 2.25 * Matrix::Identity(2, 2))), 1e-12);
  ASSERT_TRUE(target.normalizing_constant.has_value());
  EXPECT_DOUBLE_EQ(*target.normalizing_constant, 1.0);
}

TEST(Family, StringRoundTrip) {
  EXPECT_EQ(ais::family_from_string(ais::to_string(ais::Family::StudentT)), ais::Family::StudentT);
  EXPECT_EQ(ais::family_from_string(ais::to_string(ais::Family::Gaussian)), ais::Family::Gaussian);
  EXPECT_THROW(ais::family_from_string("cauchy"), std::invalid_argument);
}

}  // namespace
