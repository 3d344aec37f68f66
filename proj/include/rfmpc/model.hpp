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

#pragma once

// Problem data for linear-quadratic MPC and the offline quantities derived
// from it: the DARE solution, the spectral radius of the closed loop and the
// constant sigma with B'QB <= sigma R.

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "rfmpc/common.hpp"

namespace rfmpc {

/// Discrete-time plant x+ = A x + B u.
struct LtiSystem {
  Matrix A;
  Matrix B;

  [[nodiscard]] Eigen::Index nx() const { return A.rows(); }
  [[nodiscard]] Eigen::Index nu() const { return B.cols(); }
};

/// Polyhedron {y | G y <= g}. C/c for states, D/d for inputs.
struct PolyhedralSet {
  Matrix G;
  Vector g;

  [[nodiscard]] Eigen::Index rows() const { return G.rows(); }

  [[nodiscard]] bool contains(const Vector& y, double tol = 0.0) const {
    return ((G * y - g).array() <= tol).all();
  }

  /// {y : ||y||_inf <= bound} as 2n rows [I; -I].
  static PolyhedralSet box(Eigen::Index n, double bound) {
    PolyhedralSet set;
    set.G.resize(2 * n, n);
    set.G << Matrix::Identity(n, n), -Matrix::Identity(n, n);
    set.g = Vector::Constant(2 * n, bound);
    return set;
  }

  /// {y : |y_i| <= bounds_i}.
  static PolyhedralSet box(const Vector& bounds) {
    PolyhedralSet set = box(bounds.size(), 0.0);
    set.g << bounds, bounds;
    return set;
  }
};

struct MpcProblem {
  LtiSystem system;
  PolyhedralSet X;
  PolyhedralSet U;
  Matrix Q;
  Matrix R;
  Matrix P;
  int N = 1;

  [[nodiscard]] Eigen::Index nx() const { return system.nx(); }
  [[nodiscard]] Eigen::Index nu() const { return system.nu(); }
};

/// Infinite-horizon LQR data. Feedback convention u = K x.
struct RiccatiSolution {
  Matrix P;
  Matrix K;
  int iterations = 0;
  double residual = 0.0;
};

/// Largest eigenvalue modulus. Backed by Eigen's real Schur decomposition
/// (Hessenberg reduction + shifted QR, 2x2 blocks in closed form).
inline double spectral_radius(const Matrix& M) {
  detail::require(M.rows() == M.cols(), "spectral_radius: matrix must be square");
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "spectral_radius: Schur iteration failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Relative DARE residual ||P - (Q + A'PA - A'PB (R+B'PB)^-1 B'PA)|| / ||P||.
inline double dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                            const Matrix& P) {
  const Matrix BtP = B.transpose() * P;
  const Matrix rhs = Q + A.transpose() * P * A -
                     (BtP * A).transpose() * (R + BtP * B).llt().solve(BtP * A);
  return (P - rhs).norm() / std::max(P.norm(), 1e-300);
}

inline Matrix lqr_gain(const Matrix& A, const Matrix& B, const Matrix& R, const Matrix& P) {
  const Matrix BtP = B.transpose() * P;
  return -(R + BtP * B).llt().solve(BtP * A);
}

/// Fixed-point Riccati iteration P <- Q + A'PA - A'PB (R+B'PB)^-1 B'PA from
/// P0 = Q. Stops when the relative change drops to `tol`.
inline RiccatiSolution dare_solve(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                                  double tol = 1e-12, int max_iterations = 100000) {
  const auto n = A.rows();
  detail::require(A.cols() == n && B.rows() == n && Q.rows() == n && Q.cols() == n &&
                      R.rows() == B.cols() && R.cols() == B.cols(),
                  "dare_solve: inconsistent dimensions");
  detail::require(detail::is_positive_definite(Q) && detail::is_positive_definite(R),
                  "dare_solve: Q and R must be symmetric positive definite");

  const double blowup = 1e14 * std::max(1.0, Q.norm());
  Matrix P = Q;
  for (int it = 1; it <= max_iterations; ++it) {
    const Matrix BtP = B.transpose() * P;
    const Eigen::LLT<Matrix> M(R + BtP * B);
    Matrix next = Q + A.transpose() * P * A - (BtP * A).transpose() * M.solve(BtP * A);
    next = 0.5 * (next + next.transpose());
    const double change = (next - P).norm() / next.norm();
    P = std::move(next);
    if (!P.allFinite() || P.norm() > blowup) break;
    if (change <= tol) {
      RiccatiSolution sol;
      sol.P = P;
      sol.K = lqr_gain(A, B, R, P);
      sol.iterations = it;
      sol.residual = change;
      if (spectral_radius(A + B * sol.K) >= 1.0) break;
      return sol;
    }
  }
  throw Error(ErrorCode::NotStabilizable,
              "Riccati iteration did not converge; (A, B) is not stabilizable or badly conditioned");
}

/// Smallest sigma with B'QB <= sigma R: the largest generalized eigenvalue of
/// the pencil (B'QB, R).
inline double compute_sigma(const Matrix& B, const Matrix& Q, const Matrix& R) {
  detail::require(Q.rows() == B.rows() && R.rows() == B.cols(), "compute_sigma: inconsistent dimensions");
  const Matrix BtQB = B.transpose() * Q * B;
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(0.5 * (BtQB + BtQB.transpose()), R,
                                                      Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "compute_sigma: R not positive definite");
  return es.eigenvalues().maxCoeff();
}

/// Reports every violated invariant of the problem data; never throws.
inline std::vector<std::string> validate_problem(const MpcProblem& p) {
  std::vector<std::string> violations;
  const auto nx = p.system.A.rows();
  const auto nu = p.system.B.cols();
  const bool dims_ok = nx > 0 && nu > 0 && p.system.A.cols() == nx && p.system.B.rows() == nx;
  if (!dims_ok) violations.emplace_back("system dimensions inconsistent");
  if (p.X.G.cols() != nx || p.X.G.rows() != p.X.g.size()) violations.emplace_back("state set dimensions inconsistent");
  if (p.U.G.cols() != nu || p.U.G.rows() != p.U.g.size()) violations.emplace_back("input set dimensions inconsistent");
  if (p.X.g.size() > 0 && !(p.X.g.array() > 0.0).all()) violations.emplace_back("state bound not strictly positive");
  if (p.U.g.size() > 0 && !(p.U.g.array() > 0.0).all()) violations.emplace_back("input bound not strictly positive");

  auto check_pd = [&](const Matrix& M, Eigen::Index n, const char* name) {
    if (M.rows() != n || M.cols() != n) {
      violations.push_back(std::string(name) + " dimensions inconsistent");
    } else if (!detail::is_symmetric(M)) {
      violations.push_back(std::string(name) + " not symmetric");
    } else if (n > 0 && detail::min_eigenvalue(M) <= 0.0) {
      violations.push_back(std::string(name) + " not positive definite");
    }
  };
  check_pd(p.Q, nx, "Q");
  check_pd(p.R, nu, "R");
  check_pd(p.P, nx, "P");
  if (p.N < 1) violations.emplace_back("horizon N must be positive");
  return violations;
}

}  // namespace rfmpc
