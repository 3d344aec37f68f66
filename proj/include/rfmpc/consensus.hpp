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

// Consensus step: the equality-constrained tracking problem
//
//   min  sum_{k<N} |(z+_k - a_k, v+_k - b_k)|^2_diag(Q,R) + |z+_N - a_N|^2_P
//   s.t. z+_{k+1} = A z+_k + B v+_k   | delta_k
//        z+_0 = xhat
//
// with targets a_k = 2 x_k - z_k and b_k = 2 u_k - v_k. The multipliers use the
// Lagrangian  objective + sum_k delta_k'(z+_{k+1} - A z+_k - B v+_k), the same
// convention as the co-states of the MPC problem, so the co-state update is
// lambda <- lambda + delta.
//
// Solved by a backward Riccati sweep on the value functions
// V_k(z) = z'S_k z + 2 s_k'z + const (gains are data independent and computed
// once), a forward rollout, and delta_k = -grad V_{k+1}(z+_{k+1}).

#include <vector>

#include "rfmpc/common.hpp"
#include "rfmpc/model.hpp"

namespace rfmpc {

struct ConsensusSolution {
  Trajectory z_plus;  // N+1
  Trajectory v_plus;  // N
  Trajectory delta;   // N
};

class ConsensusSolver {
 public:
  ConsensusSolver(const LtiSystem& sys, const Matrix& Q, const Matrix& R, const Matrix& P, int N)
      : A_(sys.A), B_(sys.B), Q_(Q), R_(R), N_(N) {
    detail::require(N >= 1, "horizon must be positive");
    const auto n = static_cast<std::size_t>(N);
    S_.resize(n + 1);
    K_.resize(n);
    Acl_.resize(n);
    SB_.resize(n);
    M_.resize(n);
    S_[n] = P;
    for (int k = N - 1; k >= 0; --k) {
      const auto i = static_cast<std::size_t>(k);
      const Matrix& S_next = S_[i + 1];
      SB_[i] = S_next * B_;
      M_[i].compute(R_ + B_.transpose() * SB_[i]);
      K_[i] = -M_[i].solve(SB_[i].transpose() * A_);
      Acl_[i] = A_ + B_ * K_[i];
      Matrix S = Q_ + A_.transpose() * S_next * Acl_[i];
      S_[i] = 0.5 * (S + S.transpose());
    }
  }

  [[nodiscard]] int horizon() const { return N_; }

  /// x: stage states (N+1 entries, x[0] unused), u: stage inputs (N),
  /// z, v: previous primal iterate.
  [[nodiscard]] ConsensusSolution solve(const Trajectory& x, const Trajectory& u, const Trajectory& z,
                                        const Trajectory& v, const Vector& x_hat) const {
    const auto n = static_cast<std::size_t>(N_);
    detail::require(x.size() == n + 1 && z.size() == n + 1 && u.size() == n && v.size() == n,
                    "consensus: trajectory length mismatch");

    // Backward sweep: feedforward terms and linear value-function terms.
    Trajectory s(n + 1);
    Trajectory feedforward(n);
    s[n] = -(S_[n] * (2.0 * x[n] - z[n]));
    for (std::size_t k = n; k-- > 0;) {
      const Vector b = 2.0 * u[k] - v[k];
      const Vector Rb = R_ * b;
      feedforward[k] = M_[k].solve(Rb - B_.transpose() * s[k + 1]);
      if (k == 0) break;
      const Vector a = 2.0 * x[k] - z[k];
      s[k] = -(Q_ * a) + K_[k].transpose() * (R_ * feedforward[k] - Rb) +
             Acl_[k].transpose() * (SB_[k] * feedforward[k] + s[k + 1]);
    }

    ConsensusSolution out;
    out.z_plus.resize(n + 1);
    out.v_plus.resize(n);
    out.delta.resize(n);
    out.z_plus[0] = x_hat;
    for (std::size_t k = 0; k < n; ++k) {
      out.v_plus[k] = K_[k] * out.z_plus[k] + feedforward[k];
      out.z_plus[k + 1] = A_ * out.z_plus[k] + B_ * out.v_plus[k];
      out.delta[k] = -2.0 * (S_[k + 1] * out.z_plus[k + 1] + s[k + 1]);
    }
    return out;
  }

 private:
  Matrix A_, B_, Q_, R_;
  int N_;
  std::vector<Matrix> S_, K_, Acl_, SB_;
  std::vector<Eigen::LLT<Matrix>> M_;
};

inline ConsensusSolution solve_consensus(const Trajectory& x, const Trajectory& u, const Trajectory& z,
                                         const Trajectory& v, const Vector& x_hat, const LtiSystem& sys,
                                         const Matrix& Q, const Matrix& R, const Matrix& P) {
  return ConsensusSolver(sys, Q, R, P, static_cast<int>(u.size())).solve(x, u, z, v, x_hat);
}

}  // namespace rfmpc
