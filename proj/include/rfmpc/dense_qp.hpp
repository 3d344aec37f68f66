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

// Dense strictly convex QP
//
//   min 1/2 y'Hy + g'y   s.t.  G y <= h
//
// solved by a dual active-set method (Goldfarb-Idnani). The iteration starts
// at a dual feasible point (the unconstrained minimizer, or a warm-start active
// set with nonnegative multipliers) and adds the most violated constraint until
// the primal is feasible. Work is done in the coordinates yh = L'y with
// H = LL', where the Hessian is the identity and each constraint normal is a
// column of L^-1 G'. Those columns are cached per solver, so repeated solves
// that only change (g, h) never refactorize.

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rfmpc/common.hpp"

namespace rfmpc {

struct DenseQp {
  Matrix H;
  Vector g;
  Matrix G;
  Vector h;
};

struct QpSolution {
  Vector primal;
  Vector dual;                  // one multiplier per row of G, >= 0
  std::vector<int> active_set;  // ascending
  int iterations = 0;
};

class DenseQpSolver {
 public:
  DenseQpSolver() = default;

  DenseQpSolver(const Matrix& H, const Matrix& G) : llt_(H), G_(G) {
    detail::require(H.rows() == H.cols() && G.cols() == H.rows(), "DenseQpSolver: inconsistent dimensions");
    if (llt_.info() != Eigen::Success || !detail::is_symmetric(H)) {
      throw Error(ErrorCode::InvalidArgument, "QP Hessian not symmetric positive definite");
    }
    normals_ = llt_.matrixL().solve(G.transpose());
    normal_sq_ = normals_.colwise().squaredNorm().transpose();
  }

  [[nodiscard]] Eigen::Index num_variables() const { return G_.cols(); }
  [[nodiscard]] Eigen::Index num_constraints() const { return G_.rows(); }
  [[nodiscard]] const Matrix& constraint_matrix() const { return G_; }

  /// Solves for the given linear term and bounds. `warm_start` is a previous
  /// active set; constraints with negative multipliers are discarded from it
  /// before the dual iteration begins.
  [[nodiscard]] QpSolution solve(const Vector& g, const Vector& h, double tol = 1e-10,
                                 const std::vector<int>* warm_start = nullptr) const {
    const auto n = num_variables();
    const auto m = num_constraints();
    detail::require(g.size() == n && h.size() == m, "DenseQpSolver::solve: inconsistent dimensions");

    const Vector g_hat = llt_.matrixL().solve(g);
    Vector y_hat = -g_hat;
    Vector mu = Vector::Zero(m);
    std::vector<int> active;

    if (warm_start != nullptr && !warm_start->empty()) {
      active = *warm_start;
      std::sort(active.begin(), active.end());
      active.erase(std::unique(active.begin(), active.end()), active.end());
      std::erase_if(active, [m](int i) { return i < 0 || i >= m; });
      if (!start_from_active_set(g_hat, h, active, y_hat, mu)) {
        active.clear();
        y_hat = -g_hat;
        mu.setZero();
      }
    }

    const int max_iterations = static_cast<int>(5 * (n + m)) + 50;
    int iterations = 0;
    while (true) {
      // Most violated constraint, measured as distance in the H-metric.
      int p = -1;
      double worst = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double violation = normals_.col(i).dot(y_hat) - h(i);
        if (violation <= tol * (1.0 + std::abs(h(i)))) continue;
        if (normal_sq_(i) == 0.0) throw Error(ErrorCode::Infeasible, "constraint row with zero normal is violated");
        const double scaled = violation / std::sqrt(normal_sq_(i));
        if (scaled > worst) {
          worst = scaled;
          p = static_cast<int>(i);
        }
      }
      if (p < 0) break;

      double mu_p = 0.0;
      while (true) {
        if (++iterations > max_iterations) throw Error(ErrorCode::MaxIterations, "active-set iteration cap reached");
        const auto q = static_cast<Eigen::Index>(active.size());
        const Eigen::VectorXd w = normals_.col(p);
        Vector r = Vector::Zero(q);
        Vector zeta = w;
        if (q > 0) {
          const Matrix Na = gather(active);
          r = Na.householderQr().solve(w);
          zeta = w - Na * r;
        }
        const double zeta_sq = zeta.squaredNorm();
        const bool dependent = zeta_sq <= 1e-13 * normal_sq_(p);

        // Partial step: first active multiplier to reach zero (lowest index on ties).
        double t_partial = std::numeric_limits<double>::infinity();
        int blocking = -1;
        for (Eigen::Index j = 0; j < q; ++j) {
          if (r(j) > 1e-14) {
            const double t = mu(active[static_cast<std::size_t>(j)]) / r(j);
            if (t < t_partial) {
              t_partial = t;
              blocking = static_cast<int>(j);
            }
          }
        }
        const double violation = w.dot(y_hat) - h(p);
        const double t_full = dependent ? std::numeric_limits<double>::infinity() : violation / zeta_sq;

        if (dependent && blocking < 0) {
          throw Error(ErrorCode::Infeasible, "QP constraints are inconsistent");
        }
        const double t = std::min(t_partial, t_full);
        if (!dependent) y_hat -= t * zeta;
        for (Eigen::Index j = 0; j < q; ++j) {
          auto& mj = mu(active[static_cast<std::size_t>(j)]);
          mj = std::max(0.0, mj - t * r(j));
        }
        mu_p += t;
        mu(p) = mu_p;

        if (t_full <= t_partial) {
          active.insert(std::upper_bound(active.begin(), active.end(), p), p);
          break;
        }
        const int dropped = active[static_cast<std::size_t>(blocking)];
        mu(dropped) = 0.0;
        active.erase(active.begin() + blocking);
      }
    }

    QpSolution sol;
    sol.primal = llt_.matrixU().solve(y_hat);
    sol.dual = mu;
    sol.active_set = std::move(active);
    sol.iterations = iterations;
    return sol;
  }

 private:
  [[nodiscard]] Matrix gather(const std::vector<int>& idx) const {
    Matrix out(normals_.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = normals_.col(idx[j]);
    return out;
  }

  // Equality-constrained solution on `active`, dropping the most negative
  // multiplier until all are nonnegative. False if the normals are dependent.
  bool start_from_active_set(const Vector& g_hat, const Vector& h, std::vector<int>& active, Vector& y_hat,
                             Vector& mu) const {
    while (!active.empty()) {
      const Matrix Na = gather(active);
      const Eigen::ColPivHouseholderQR<Matrix> qr(Na);
      if (qr.rank() < Na.cols()) return false;
      Vector h_active(static_cast<Eigen::Index>(active.size()));
      for (std::size_t j = 0; j < active.size(); ++j) h_active(static_cast<Eigen::Index>(j)) = h(active[j]);
      // Na' y = h_a with y = -g - Na mu  =>  (Na'Na) mu = -(h_a + Na'g).
      const Matrix gram = Na.transpose() * Na;
      const Vector mu_a = gram.ldlt().solve(-(h_active + Na.transpose() * g_hat));
      Eigen::Index worst = 0;
      const double most_negative = mu_a.minCoeff(&worst);
      if (most_negative >= 0.0) {
        mu.setZero();
        for (std::size_t j = 0; j < active.size(); ++j) mu(active[j]) = mu_a(static_cast<Eigen::Index>(j));
        y_hat = -g_hat - Na * mu_a;
        return true;
      }
      active.erase(active.begin() + worst);
    }
    return true;
  }

  Eigen::LLT<Matrix> llt_;
  Matrix G_;
  Matrix normals_;  // L^-1 G'
  Vector normal_sq_;
};

/// One-shot solve without warm start.
inline QpSolution solve_dense_qp(const DenseQp& qp, double tol = 1e-10) {
  return DenseQpSolver(qp.H, qp.G).solve(qp.g, qp.h, tol);
}

}  // namespace rfmpc
