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

// Spring-mass-damper chain benchmark. Cart i has position p_i and velocity
// v_i; the first cart is attached to a wall (p_0 = 0) and the last one is free
// (p_{n+1} = p_n):
//
//   p_i+ = p_i + h v_i
//   v_i+ = v_i + h/m (k_s (p_{i-1} - 2 p_i + p_{i+1}) - k_d v_i + u_i)
//
// State ordering (p_1, v_1, ..., p_n, v_n); box constraints on x and u.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rfmpc/config.hpp"
#include "rfmpc/contraction.hpp"
#include "rfmpc/model.hpp"

namespace rfmpc {

struct BenchConfig {
  int n_carts = 60;
  double h = 0.1;
  double mass = 1.0;
  double k_s = 1.0;
  double k_d = 1.0;
  double x_bar = 2.5;
  double u_bar = 1.0;
  int N = 100;
  double x0_scale = 1.5;
  std::vector<int> m_bar_sweep{1, 5, 10, 25, 50};
  std::vector<int> seeds{0};

  // Contraction design.
  std::optional<double> beta;
  std::optional<double> r;
  double r_fraction = 0.1;
  std::optional<double> alpha;

  // Tolerances and limits.
  double dare_tol = 1e-12;
  double qp_tol = 1e-10;
  double reference_tol = 1e-10;
  double eps_stop = 1e-8;
  int t_max = 3000;
  int workers = 1;

  [[nodiscard]] DesignOptions design_options() const { return {beta, r, r_fraction, alpha}; }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"n_carts", "h", "mass", "k_s", "k_d", "x_bar", "u_bar", "N", "x0_scale",
                                         "m_bar_sweep", "seeds", "beta", "r", "r_fraction", "alpha", "dare_tol",
                                         "qp_tol", "reference_tol", "eps_stop", "t_max", "workers"};
    return k;
  }

  static BenchConfig from(const KeyValueConfig& kv) {
    kv.require_known(keys());
    BenchConfig c;
    c.n_carts = kv.get_int("n_carts", c.n_carts);
    c.h = kv.get_real("h", c.h);
    c.mass = kv.get_real("mass", c.mass);
    c.k_s = kv.get_real("k_s", c.k_s);
    c.k_d = kv.get_real("k_d", c.k_d);
    c.x_bar = kv.get_real("x_bar", c.x_bar);
    c.u_bar = kv.get_real("u_bar", c.u_bar);
    c.N = kv.get_int("N", c.N);
    c.x0_scale = kv.get_real("x0_scale", c.x0_scale);
    c.m_bar_sweep = kv.get_int_list("m_bar_sweep", c.m_bar_sweep);
    c.seeds = kv.get_int_list("seeds", c.seeds);
    if (kv.has("beta")) c.beta = kv.get_real("beta", 0.0);
    if (kv.has("r")) c.r = kv.get_real("r", 0.0);
    c.r_fraction = kv.get_real("r_fraction", c.r_fraction);
    if (kv.has("alpha")) c.alpha = kv.get_real("alpha", 0.0);
    c.dare_tol = kv.get_real("dare_tol", c.dare_tol);
    c.qp_tol = kv.get_real("qp_tol", c.qp_tol);
    c.reference_tol = kv.get_real("reference_tol", c.reference_tol);
    c.eps_stop = kv.get_real("eps_stop", c.eps_stop);
    c.t_max = kv.get_int("t_max", c.t_max);
    c.workers = kv.get_int("workers", c.workers);
    c.validate();
    return c;
  }

  static BenchConfig load(const std::string& path) { return from(KeyValueConfig::load(path)); }

  /// Reduced desk-scale instance: 5 carts, horizon 20.
  static BenchConfig reduced() {
    BenchConfig c;
    c.n_carts = 5;
    c.N = 20;
    return c;
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be positive");
    };
    if (n_carts < 1) throw Error(ErrorCode::InvalidArgument, "n_carts must be at least 1");
    if (N < 1) throw Error(ErrorCode::InvalidArgument, "N must be at least 1");
    positive(h, "h");
    positive(mass, "mass");
    positive(k_s, "k_s");
    positive(k_d, "k_d");
    positive(x_bar, "x_bar");
    positive(u_bar, "u_bar");
    positive(r_fraction, "r_fraction");
    if (r) positive(*r, "r");
    for (int m : m_bar_sweep) {
      if (m < 1) throw Error(ErrorCode::InvalidArgument, "m_bar_sweep entries must be positive");
    }
    if (t_max < 1) throw Error(ErrorCode::InvalidArgument, "t_max must be at least 1");
    if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be at least 1");
  }

  [[nodiscard]] Vector x0(Eigen::Index nx) const { return Vector::Constant(nx, x0_scale); }
};

struct ChainModel {
  LtiSystem system;
  PolyhedralSet X;
  PolyhedralSet U;
};

inline ChainModel build_chain(const BenchConfig& cfg) {
  detail::require(cfg.n_carts >= 1, "build_chain: need at least one cart");
  const int n = cfg.n_carts;
  const Eigen::Index nx = 2 * n;
  Matrix A = Matrix::Identity(nx, nx);
  Matrix B = Matrix::Zero(nx, n);
  const double hm = cfg.h / cfg.mass;
  for (int i = 0; i < n; ++i) {
    const Eigen::Index p = 2 * i;
    const Eigen::Index v = p + 1;
    A(p, v) += cfg.h;
    A(v, v) -= hm * cfg.k_d;
    A(v, p) -= 2.0 * hm * cfg.k_s;
    if (i > 0) A(v, p - 2) += hm * cfg.k_s;           // p_{i-1}; p_0 = 0 at the wall
    if (i + 1 < n) A(v, p + 2) += hm * cfg.k_s;       // p_{i+1}
    else A(v, p) += hm * cfg.k_s;                     // free end: p_{n+1} = p_n
    B(v, i) = hm;
  }
  return {{A, B}, PolyhedralSet::box(nx, cfg.x_bar), PolyhedralSet::box(n, cfg.u_bar)};
}

/// Number of decision variables of the monolithic QP: (N+1) n_x + N n_u.
inline long monolithic_variables(const LtiSystem& sys, int N) {
  return static_cast<long>(N + 1) * sys.nx() + static_cast<long>(N) * sys.nu();
}

struct ChainSetup {
  MpcProblem problem;
  RiccatiSolution riccati;
};

/// Chain problem with Q = I, R = I and P from the DARE.
inline ChainSetup make_chain_problem(const BenchConfig& cfg) {
  auto chain = build_chain(cfg);
  const auto nx = chain.system.nx();
  const auto nu = chain.system.nu();
  const Matrix Q = Matrix::Identity(nx, nx);
  const Matrix R = Matrix::Identity(nu, nu);
  auto ric = dare_solve(chain.system.A, chain.system.B, Q, R, cfg.dare_tol);
  MpcProblem p{chain.system, chain.X, chain.U, Q, R, ric.P, cfg.N};
  return {std::move(p), std::move(ric)};
}

}  // namespace rfmpc
