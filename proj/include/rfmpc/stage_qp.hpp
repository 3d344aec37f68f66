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

// Decoupled stage problems of the parallel scheme. With co-state guesses
// lambda and primal guesses (z, v):
//
//   initial   min |u|_R^2 - lambda_0'B u + |u - v_0|_R^2
//             s.t. D u <= d,  C(A xhat + B u) <= c_hat_1
//   stage k   min |x|_Q^2 + |u|_R^2 - lambda_k'B u + (lambda_{k-1} - A'lambda_k)'x
//                 + |x - z_k|_Q^2 + |u - v_k|_R^2
//             s.t. D u <= d_hat_k,  C(A x + B u) <= c_hat_{k+1}
//   terminal  min |x|_P^2 + lambda_{N-1}'x + |x - z_N|_P^2
//
// Without margins only the input rows are present.

#include <optional>
#include <utility>
#include <vector>

#include "rfmpc/contraction.hpp"
#include "rfmpc/dense_qp.hpp"
#include "rfmpc/model.hpp"

namespace rfmpc {

struct StageResult {
  Vector x;  // empty for the initial stage
  Vector u;
  std::vector<int> active_set;
};

/// Cached factorizations for all stage problems of one MPC problem. The
/// Hessians and constraint matrices are stage independent; only the linear
/// terms and bounds change between calls.
class StageProblems {
 public:
  StageProblems(const MpcProblem& problem, std::optional<TightenedMargins> margins)
      : problem_(problem), margins_(std::move(margins)), P_llt_(problem.P) {
    const auto& sys = problem.system;
    const auto nx = sys.nx();
    const auto nu = sys.nu();
    const auto& D = problem.U.G;
    const auto& C = problem.X.G;
    if (margins_) {
      detail::require(margins_->horizon() == problem.N, "margins horizon does not match problem");
    }

    Matrix G0 = D;
    if (margins_) {
      G0.resize(D.rows() + C.rows(), nu);
      G0 << D, C * sys.B;
    }
    initial_ = DenseQpSolver(4.0 * problem.R, G0);

    Matrix H(nx + nu, nx + nu);
    H.setZero();
    H.topLeftCorner(nx, nx) = 4.0 * problem.Q;
    H.bottomRightCorner(nu, nu) = 4.0 * problem.R;
    Matrix Gk = Matrix::Zero(D.rows() + (margins_ ? C.rows() : 0), nx + nu);
    Gk.topRightCorner(D.rows(), nu) = D;
    if (margins_) {
      Gk.bottomLeftCorner(C.rows(), nx) = C * sys.A;
      Gk.bottomRightCorner(C.rows(), nu) = C * sys.B;
    }
    middle_ = DenseQpSolver(H, Gk);
    if (P_llt_.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "P not positive definite");
  }

  [[nodiscard]] bool has_state_constraints() const { return margins_.has_value(); }
  [[nodiscard]] const std::optional<TightenedMargins>& margins() const { return margins_; }

  [[nodiscard]] StageResult solve_initial(const Vector& lambda0, const Vector& v0, const Vector& x_hat,
                                          double tol = 1e-10, const std::vector<int>* warm = nullptr) const {
    const auto& sys = problem_.system;
    const Vector g = -(sys.B.transpose() * lambda0) - 2.0 * (problem_.R * v0);
    Vector h(initial_.num_constraints());
    h.head(problem_.U.rows()) = problem_.U.g;
    if (margins_) h.tail(problem_.X.rows()) = margins_->c_hat[1] - problem_.X.G * (sys.A * x_hat);
    auto sol = initial_.solve(g, h, tol, warm);
    return {Vector(), std::move(sol.primal), std::move(sol.active_set)};
  }

  [[nodiscard]] StageResult solve_middle(int k, const Vector& lambda_prev, const Vector& lambda_k,
                                         const Vector& z_k, const Vector& v_k, double tol = 1e-10,
                                         const std::vector<int>* warm = nullptr) const {
    detail::require(k >= 1 && k < problem_.N, "stage index out of range");
    const auto& sys = problem_.system;
    const auto nx = sys.nx();
    const auto nu = sys.nu();
    Vector g(nx + nu);
    g.head(nx) = lambda_prev - sys.A.transpose() * lambda_k - 2.0 * (problem_.Q * z_k);
    g.tail(nu) = -(sys.B.transpose() * lambda_k) - 2.0 * (problem_.R * v_k);
    Vector h(middle_.num_constraints());
    h.head(problem_.U.rows()) = margins_ ? margins_->d_hat[static_cast<std::size_t>(k)] : problem_.U.g;
    if (margins_) h.tail(problem_.X.rows()) = margins_->c_hat[static_cast<std::size_t>(k) + 1];
    auto sol = middle_.solve(g, h, tol, warm);
    return {sol.primal.head(nx), sol.primal.tail(nu), std::move(sol.active_set)};
  }

  /// Closed form x_N = z_N / 2 - P^-1 lambda_{N-1} / 4.
  [[nodiscard]] Vector solve_terminal(const Vector& lambda_last, const Vector& z_N) const {
    return 0.5 * z_N - 0.25 * P_llt_.solve(lambda_last);
  }

 private:
  MpcProblem problem_;
  std::optional<TightenedMargins> margins_;
  Eigen::LLT<Matrix> P_llt_;
  DenseQpSolver initial_;
  DenseQpSolver middle_;
};

namespace detail {

inline MpcProblem stage_problem(const LtiSystem& sys, const PolyhedralSet& X, const PolyhedralSet& U,
                                const Matrix& Q, const Matrix& R, const Matrix& P, int N) {
  return MpcProblem{sys, X, U, Q, R, P, N};
}

}  // namespace detail

/// Initial stage problem; pass std::nullopt margins for the input-only variant.
inline Vector solve_stage_initial(const Vector& lambda0, const Vector& v0, const Vector& x_hat,
                                  const LtiSystem& sys, const PolyhedralSet& X, const PolyhedralSet& U,
                                  const std::optional<TightenedMargins>& margins, const Matrix& R,
                                  double tol = 1e-10) {
  const auto nx = sys.nx();
  const int N = margins ? margins->horizon() : 1;
  const auto problem = detail::stage_problem(sys, X, U, Matrix::Identity(nx, nx), R, Matrix::Identity(nx, nx), N);
  return StageProblems(problem, margins).solve_initial(lambda0, v0, x_hat, tol).u;
}

/// Middle stage problem for 1 <= k <= N-1; returns (x_k, u_k).
inline std::pair<Vector, Vector> solve_stage_k(int k, const Vector& lambda_prev, const Vector& lambda_k,
                                               const Vector& z_k, const Vector& v_k, const LtiSystem& sys,
                                               const PolyhedralSet& X, const PolyhedralSet& U,
                                               const std::optional<TightenedMargins>& margins, const Matrix& Q,
                                               const Matrix& R, int N, double tol = 1e-10) {
  const auto nx = sys.nx();
  const auto problem = detail::stage_problem(sys, X, U, Q, R, Matrix::Identity(nx, nx), N);
  auto res = StageProblems(problem, margins).solve_middle(k, lambda_prev, lambda_k, z_k, v_k, tol);
  return {std::move(res.x), std::move(res.u)};
}

inline Vector solve_stage_terminal(const Vector& lambda_last, const Vector& z_N, const Matrix& P) {
  return 0.5 * z_N - 0.25 * P.llt().solve(lambda_last);
}

}  // namespace rfmpc
