/*
 Copyright 2026 The rfmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "rfmpc/model.hpp"
#include "test_util.hpp"

namespace rfmpc {
namespace {

using testing::random_matrix;
using testing::random_system;

TEST(Dare, DeadbeatCollapsesToQ) {
  const Matrix A = Matrix::Zero(2, 2);
  const Matrix I = Matrix::Identity(2, 2);
  const auto sol = dare_solve(A, I, I, I);
  EXPECT_LE((sol.P - I).norm(), 1e-12);
  EXPECT_LE(sol.K.norm(), 1e-12);
}

TEST(Dare, ScalarGoldenRatio) {
  const Matrix one = Matrix::Identity(1, 1);
  const auto sol = dare_solve(one, one, one, one);
  // p = 1 + p - p^2/(1+p)  <=>  p^2 - p - 1 = 0.
  const double p = (1.0 + std::sqrt(5.0)) / 2.0;
  EXPECT_NEAR(sol.P(0, 0), p, 1e-10);
  EXPECT_NEAR(sol.K(0, 0), -p / (1.0 + p), 1e-10);
}

TEST(Dare, RandomInstancesSatisfyResidualAndStability) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto nx = 1 + static_cast<Eigen::Index>(rng() % 8);
    const auto nu = 1 + static_cast<Eigen::Index>(rng() % 3);
    const auto sys = random_system(rng, nx, nu);
    const Matrix Q = testing::random_spd(rng, nx);
    const Matrix R = testing::random_spd(rng, nu);
    const auto sol = dare_solve(sys.A, sys.B, Q, R);
    EXPECT_LE(dare_residual(sys.A, sys.B, Q, R, sol.P), 1e-10) << "trial " << trial;
    EXPECT_LT(spectral_radius(sys.A + sys.B * sol.K), 1.0) << "trial " << trial;
  }
}

TEST(Dare, UncontrollableUnstableModeThrows) {
  Matrix A(2, 2);
  A << 1.5, 0.0, 0.0, 0.5;
  Matrix B(2, 1);
  B << 0.0, 1.0;
  const Matrix Q = Matrix::Identity(2, 2);
  const Matrix R = Matrix::Identity(1, 1);
  try {
    (void)dare_solve(A, B, Q, R);
    FAIL() << "expected NotStabilizable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotStabilizable);
  }
}

TEST(SpectralRadius, Examples) {
  EXPECT_NEAR(spectral_radius(0.5 * Matrix::Identity(3, 3)), 0.5, 1e-14);
  Matrix nil(2, 2);
  nil << 0, 1, 0, 0;
  EXPECT_NEAR(spectral_radius(nil), 0.0, 1e-14);
  Matrix tri(2, 2);
  tri << 0.9, 0.5, 0.0, 0.8;
  EXPECT_NEAR(spectral_radius(tri), 0.9, 1e-14);
}

TEST(SpectralRadius, MatchesCharacteristicRootsOn2x2) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix M = random_matrix(rng, 2, 2);
    const double tr = M.trace(), det = M.determinant();
    const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4.0 * det));
    const double oracle = std::max(std::abs((tr + disc) / 2.0), std::abs((tr - disc) / 2.0));
    EXPECT_NEAR(spectral_radius(M), oracle, 1e-10);
  }
}

TEST(Sigma, Examples) {
  const Matrix I = Matrix::Identity(2, 2);
  EXPECT_NEAR(compute_sigma(I, I, I), 1.0, 1e-14);
  EXPECT_NEAR(compute_sigma(I, I, 2.0 * I), 0.5, 1e-14);
  std::mt19937_64 rng(3);
  const Matrix B = random_matrix(rng, 3, 2);
  const double oracle = Eigen::SelfAdjointEigenSolver<Matrix>(B.transpose() * B).eigenvalues().maxCoeff();
  EXPECT_NEAR(compute_sigma(B, Matrix::Identity(3, 3), I), oracle, 1e-12);
}

TEST(Sigma, IsTightSemidefiniteBound) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto nx = 1 + static_cast<Eigen::Index>(rng() % 5);
    const auto nu = 1 + static_cast<Eigen::Index>(rng() % 3);
    const Matrix B = random_matrix(rng, nx, nu);
    const Matrix Q = testing::random_spd(rng, nx);
    const Matrix R = testing::random_spd(rng, nu);
    const double s = compute_sigma(B, Q, R);
    const Matrix BtQB = B.transpose() * Q * B;
    EXPECT_GE(detail::min_eigenvalue(s * R - BtQB), -1e-10);
    EXPECT_LT(detail::min_eigenvalue((s - 1e-6 * s) * R - BtQB), 0.0);
  }
}

MpcProblem small_problem() {
  Matrix A(2, 2);
  A << 1.0, 0.1, 0.0, 1.0;
  Matrix B(2, 1);
  B << 0.0, 0.1;
  return {{A, B}, PolyhedralSet::box(2, 1.0), PolyhedralSet::box(1, 1.0), Matrix::Identity(2, 2),
          Matrix::Identity(1, 1), Matrix::Identity(2, 2), 5};
}

TEST(ValidateProblem, WellFormedIsClean) { EXPECT_TRUE(validate_problem(small_problem()).empty()); }

TEST(ValidateProblem, ZeroStateBound) {
  auto p = small_problem();
  p.X.g(1) = 0.0;
  const auto v = validate_problem(p);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "state bound not strictly positive");
}

TEST(ValidateProblem, IndefiniteQ) {
  auto p = small_problem();
  p.Q(1, 1) = -1.0;
  const auto v = validate_problem(p);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0], "Q not positive definite");
}

TEST(ValidateProblem, ReportsSeveralViolations) {
  auto p = small_problem();
  p.U.g(0) = -1.0;
  p.N = 0;
  p.R(0, 0) = 0.0;
  EXPECT_EQ(validate_problem(p).size(), 3u);
}

TEST(PolyhedralSet, BoxMembership) {
  const auto X = PolyhedralSet::box(2, 2.5);
  EXPECT_EQ(X.rows(), 4);
  EXPECT_TRUE(X.contains(Vector::Constant(2, 2.5)));
  EXPECT_FALSE(X.contains(Vector::Constant(2, 2.5 + 1e-6)));
  EXPECT_TRUE(X.contains(Vector::Constant(2, -2.5)));
}

}  // namespace
}  // namespace rfmpc
