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

// Beta-contractive ellipsoids E(Z) = {Z^(1/2) v : |v| <= 1}, the separable
// time-varying constraint margins they induce, the terminal region alpha*E(Z)
// and the admissible-set certificates used to argue recursive feasibility.
//
// The ellipsoid is built from the discrete Lyapunov equation
//   S Zt S' - Zt = -I,   S = (A + B K) / beta,
// and scaled to Z = gamma * Zt with the smallest gamma giving inner radius r.
// Every constraint of the trace-minimizing SDP is then satisfied, but the
// trace is only minimal within this one-parameter family.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rfmpc/common.hpp"
#include "rfmpc/model.hpp"

namespace rfmpc {

struct ContractionDesign {
  Matrix K;
  double beta = 0.0;
  Matrix Z;
  double r = 0.0;
  double alpha = 0.0;
  double sigma = 0.0;
  std::optional<double> kappa_hat;
  int N = 1;
};

/// Bounds of Y_k = {x | C x <= c_hat[k]} (k = 0..N) and
/// W_k = {u | D u <= d_hat[k]} (k = 0..N-1).
struct TightenedMargins {
  Trajectory c_hat;
  Trajectory d_hat;

  [[nodiscard]] int horizon() const { return static_cast<int>(d_hat.size()); }

  /// Untightened bounds (c_hat[k] = c, d_hat[k] = d), i.e. the original sets.
  static TightenedMargins nominal(const PolyhedralSet& X, const PolyhedralSet& U, int N) {
    TightenedMargins m;
    m.c_hat.assign(static_cast<std::size_t>(N) + 1, X.g);
    m.d_hat.assign(static_cast<std::size_t>(N), U.g);
    return m;
  }
};

/// Witness trajectories (y_0..y_N, w_0..w_{N-1}) for membership in the
/// admissible set.
struct Certificate {
  Trajectory y;
  Trajectory w;
};

/// Ellipsoid alpha*E(Z) with a cached Cholesky factor of Z.
class Ellipsoid {
 public:
  explicit Ellipsoid(const Matrix& Z) : llt_(Z) {
    if (llt_.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "ellipsoid shape not positive definite");
  }

  /// x' Z^-1 x.
  [[nodiscard]] double quadratic_form(const Vector& x) const {
    return llt_.matrixL().solve(x).squaredNorm();
  }

  [[nodiscard]] bool contains(const Vector& x, double scale = 1.0, double tol = 1e-9) const {
    return quadratic_form(x) <= scale * scale + tol;
  }

  /// Point Z^(1/2)-image of a unit vector e (Cholesky square root), on the
  /// boundary of E(Z) when |e| = 1.
  [[nodiscard]] Vector boundary_point(const Vector& e) const { return llt_.matrixL() * e; }

 private:
  Eigen::LLT<Matrix> llt_;
};

inline double closed_loop_radius(const LtiSystem& sys, const Matrix& K) {
  return spectral_radius(sys.A + sys.B * K);
}

/// Contraction factor in (rho(A+BK), 1): the requested value if given,
/// otherwise the midpoint (rho + 1) / 2.
inline double select_beta(const LtiSystem& sys, const Matrix& K, std::optional<double> requested = std::nullopt) {
  const double rho = closed_loop_radius(sys, K);
  if (!(rho < 1.0)) {
    throw Error(ErrorCode::NotContractive, "closed loop spectral radius " + std::to_string(rho) + " >= 1");
  }
  if (!requested) return 0.5 * (rho + 1.0);
  if (!(*requested > rho && *requested < 1.0)) {
    throw Error(ErrorCode::InvalidBeta, "beta = " + std::to_string(*requested) + " not in (" +
                                            std::to_string(rho) + ", 1)");
  }
  return *requested;
}

/// Solves S X S' - X = -I by summing the series sum_k S^k S'^k with
/// repeated squaring (Smith iteration). Terms below 1e-14 relative stop it.
inline Matrix discrete_lyapunov_identity(const Matrix& S, int max_doublings = 64) {
  const auto n = S.rows();
  Matrix X = Matrix::Identity(n, n);
  Matrix T = S;
  for (int j = 0; j < max_doublings; ++j) {
    const Matrix term = T * X * T.transpose();
    X += term;
    if (!X.allFinite()) break;
    if (term.norm() <= 1e-14 * X.norm()) return 0.5 * (X + X.transpose());
    T = T * T;
  }
  throw Error(ErrorCode::NotContractive, "Lyapunov series did not converge; rho(S) >= 1");
}

namespace detail {

/// Scale-free part of the ellipsoid synthesis: Zt, its smallest eigenvalue and
/// the largest admissible scale gamma_max from the row-wise feasibility.
struct LyapunovShape {
  Matrix Z_tilde;
  double lambda_min = 0.0;
  double gamma_max = std::numeric_limits<double>::infinity();
};

inline double row_gamma_bound(const Matrix& G, const Vector& g, const Matrix& Z_tilde, double alpha) {
  double bound = std::numeric_limits<double>::infinity();
  const double shrink = 1.0 / ((1.0 + alpha) * (1.0 + alpha));
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    const double q = G.row(i) * Z_tilde * G.row(i).transpose();
    if (q > 0.0) bound = std::min(bound, shrink * g(i) * g(i) / q);
  }
  return bound;
}

inline LyapunovShape lyapunov_shape(const LtiSystem& sys, const Matrix& K, double beta, double alpha,
                                    const PolyhedralSet& X, const PolyhedralSet& U) {
  const double rho = closed_loop_radius(sys, K);
  if (!(rho < 1.0)) throw Error(ErrorCode::NotContractive, "closed loop spectral radius >= 1");
  if (!(beta > rho && beta < 1.0)) throw Error(ErrorCode::InvalidBeta, "beta not in (rho(A+BK), 1)");
  require(alpha >= 0.0, "alpha must be nonnegative");
  require((X.g.array() > 0.0).all() && (U.g.array() > 0.0).all(), "constraint bounds must be positive");

  LyapunovShape shape;
  shape.Z_tilde = discrete_lyapunov_identity((sys.A + sys.B * K) / beta);
  shape.lambda_min = min_eigenvalue(shape.Z_tilde);
  shape.gamma_max = std::min(row_gamma_bound(X.G, X.g, shape.Z_tilde, alpha),
                             row_gamma_bound(U.G * K, U.g, shape.Z_tilde, alpha));
  return shape;
}

inline bool radius_fits(const LyapunovShape& shape, double r) {
  return r * r / shape.lambda_min <= shape.gamma_max;
}

}  // namespace detail

/// Shape matrix Z of a beta-contractive ellipsoid with inner radius r whose
/// (1 + alpha)-inflation fits in X and whose K-image fits in U.
inline Matrix synth_ellipsoid(const LtiSystem& sys, const Matrix& K, double beta, double r, double alpha,
                              const PolyhedralSet& X, const PolyhedralSet& U) {
  detail::require(r > 0.0, "inner radius must be positive");
  const auto shape = detail::lyapunov_shape(sys, K, beta, alpha, X, U);
  const double gamma = r * r / shape.lambda_min;
  if (gamma > shape.gamma_max) {
    const double r_max = std::sqrt(shape.gamma_max * shape.lambda_min);
    throw Error(ErrorCode::RadiusTooLarge, "inner radius " + std::to_string(r) +
                                               " too large; largest admissible radius is about " +
                                               std::to_string(r_max));
  }
  return gamma * shape.Z_tilde;
}

/// Largest r for which synth_ellipsoid succeeds, by bisection to relative
/// tolerance `tol`. Returns the last radius known to succeed.
inline double max_inner_radius(const LtiSystem& sys, const Matrix& K, double beta, double alpha,
                               const PolyhedralSet& X, const PolyhedralSet& U, double tol = 1e-10) {
  const auto shape = detail::lyapunov_shape(sys, K, beta, alpha, X, U);
  if (!std::isfinite(shape.gamma_max)) {
    throw Error(ErrorCode::InvalidArgument, "constraints do not bound the ellipsoid");
  }
  // Bracket [lo, hi] with fits(lo) and !fits(hi).
  double lo = 1.0;
  double hi = 1.0;
  if (detail::radius_fits(shape, 1.0)) {
    while (detail::radius_fits(shape, hi)) hi *= 2.0;
    lo = hi / 2.0;
  } else {
    while (!detail::radius_fits(shape, lo)) lo /= 2.0;
    hi = lo * 2.0;
  }
  while (hi - lo > tol * lo) {
    const double mid = 0.5 * (lo + hi);
    (detail::radius_fits(shape, mid) ? lo : hi) = mid;
  }
  return lo;
}

/// c_hat_k = c - (1 - beta^k) sqrt(diag(C Z C')),
/// d_hat_k = d - (1 - beta^k) sqrt(diag(D K Z K' D')).
inline TightenedMargins tighten_margins(const Matrix& Z, const Matrix& K, double beta, int N,
                                        const PolyhedralSet& X, const PolyhedralSet& U) {
  detail::require(N >= 1, "horizon must be positive");
  const Vector state_support = (X.G * Z * X.G.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  const Matrix DK = U.G * K;
  const Vector input_support = (DK * Z * DK.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();

  TightenedMargins m;
  m.c_hat.reserve(static_cast<std::size_t>(N) + 1);
  m.d_hat.reserve(static_cast<std::size_t>(N));
  for (int k = 0; k <= N; ++k) {
    const double shrink = 1.0 - std::pow(beta, k);
    m.c_hat.push_back(X.g - shrink * state_support);
    if (k < N) m.d_hat.push_back(U.g - shrink * input_support);
  }
  for (const auto& c : m.c_hat) {
    if (!(c.array() > 0.0).all()) throw Error(ErrorCode::EmptyMargin, "tightened state bound not positive");
  }
  for (const auto& d : m.d_hat) {
    if (!(d.array() > 0.0).all()) throw Error(ErrorCode::EmptyMargin, "tightened input bound not positive");
  }
  return m;
}

/// Membership in the terminal region alpha*E(Z).
inline bool in_terminal(const Vector& x, const Matrix& Z, double alpha, double tol = 1e-9) {
  return Ellipsoid(Z).contains(x, alpha, tol);
}

/// Checks (y_0, w_0) = (x, u), the dynamics, C y_k <= c_hat_k, D w_k <= d_hat_k
/// for k < N and y_N in alpha*E(Z).
inline bool check_certificate(const Certificate& cert, const LtiSystem& sys, const PolyhedralSet& X,
                              const PolyhedralSet& U, const TightenedMargins& margins, const Matrix& Z,
                              double alpha, const Vector& x, const Vector& u, double tol = 1e-9) {
  const auto N = static_cast<std::size_t>(margins.horizon());
  if (cert.y.size() != N + 1 || cert.w.size() != N) return false;
  if ((cert.y[0] - x).cwiseAbs().maxCoeff() > tol || (cert.w[0] - u).cwiseAbs().maxCoeff() > tol) return false;
  for (std::size_t k = 0; k < N; ++k) {
    const Vector next = sys.A * cert.y[k] + sys.B * cert.w[k];
    if ((next - cert.y[k + 1]).norm() > tol * std::max(1.0, next.norm())) return false;
    if (((X.G * cert.y[k] - margins.c_hat[k]).array() > tol).any()) return false;
    if (((U.G * cert.w[k] - margins.d_hat[k]).array() > tol).any()) return false;
  }
  return in_terminal(cert.y[N], Z, alpha, tol);
}

/// Builds the certificate for the successor state x_plus:
///   y+_0 = x_plus,
///   y+_{k+1} = y_{k+2} + (A+BK)(y+_k - y_{k+1}),
///   w+_k = w_{k+1} + K (y+_k - y_{k+1}),
/// with the LQR tail y_{N+1} = (A+BK) y_N, w_N = K y_N.
inline Certificate shift_certificate(const Certificate& cert, const LtiSystem& sys, const Vector& x_plus,
                                     const Matrix& K) {
  const auto N = cert.w.size();
  detail::require(N >= 1 && cert.y.size() == N + 1, "certificate length mismatch");
  const Matrix Acl = sys.A + sys.B * K;

  Trajectory y_ext(cert.y);
  y_ext.push_back(Acl * cert.y[N]);
  Trajectory w_ext(cert.w);
  w_ext.push_back(K * cert.y[N]);

  Certificate out;
  out.y.resize(N + 1);
  out.w.resize(N);
  out.y[0] = x_plus;
  for (std::size_t k = 0; k < N; ++k) {
    const Vector offset = out.y[k] - y_ext[k + 1];
    out.w[k] = w_ext[k + 1] + K * offset;
    out.y[k + 1] = y_ext[k + 2] + Acl * offset;
  }
  return out;
}

/// Design-invariant checks. Each entry is empty on success; otherwise names
/// the violated condition.
struct DesignCheck {
  double contraction_slack = 0.0;  // lambda_min(beta^2 Z - Acl Z Acl')
  double radius_slack = 0.0;       // lambda_min(Z) - r^2
  double state_row_slack = 0.0;    // min_i (1+alpha)^-2 c_i^2 - C_i Z C_i'
  double input_row_slack = 0.0;    // same for D K
  double symmetry_error = 0.0;
  std::vector<std::string> violations;

  [[nodiscard]] bool ok() const { return violations.empty(); }
};

inline DesignCheck check_design(const ContractionDesign& design, const LtiSystem& sys, const PolyhedralSet& X,
                                const PolyhedralSet& U, double tol = 1e-9) {
  DesignCheck out;
  const Matrix& Z = design.Z;
  const Matrix Acl = sys.A + sys.B * design.K;
  out.symmetry_error = (Z - Z.transpose()).cwiseAbs().maxCoeff();
  out.contraction_slack = detail::min_eigenvalue(design.beta * design.beta * Z - Acl * Z * Acl.transpose());
  out.radius_slack = detail::min_eigenvalue(Z) - design.r * design.r;
  const double shrink = 1.0 / ((1.0 + design.alpha) * (1.0 + design.alpha));
  auto row_slack = [&](const Matrix& G, const Vector& g) {
    double slack = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < G.rows(); ++i) {
      const double q = G.row(i) * Z * G.row(i).transpose();
      const double cap = shrink * g(i) * g(i);
      slack = std::min(slack, (cap - q) / std::max(cap, 1e-300));
    }
    return slack;
  };
  out.state_row_slack = row_slack(X.G, X.g);
  out.input_row_slack = row_slack(U.G * design.K, U.g);

  const double rho = spectral_radius(Acl);
  if (!(design.beta > rho && design.beta < 1.0)) out.violations.emplace_back("beta not in (rho(A+BK), 1)");
  if (out.symmetry_error > tol * std::max(1.0, Z.cwiseAbs().maxCoeff())) out.violations.emplace_back("Z not symmetric");
  if (detail::min_eigenvalue(Z) <= 0.0) out.violations.emplace_back("Z not positive definite");
  if (out.contraction_slack < -tol) out.violations.emplace_back("contraction inequality violated");
  if (detail::min_eigenvalue(Z) < design.r * design.r * (1.0 - tol)) out.violations.emplace_back("inner radius violated");
  if (out.state_row_slack < -tol) out.violations.emplace_back("state rows violate (1+alpha) feasibility");
  if (out.input_row_slack < -tol) out.violations.emplace_back("input rows violate (1+alpha) feasibility");
  if (design.alpha < std::pow(design.beta, design.N) * (1.0 - 1e-15)) out.violations.emplace_back("alpha < beta^N");
  return out;
}

struct DesignOptions {
  std::optional<double> beta;
  /// Absolute inner radius; when absent, r = r_fraction * max_inner_radius.
  std::optional<double> r;
  double r_fraction = 0.1;
  /// Terminal scale; defaults to beta^N.
  std::optional<double> alpha;
};

/// Full offline synthesis for a problem with given gain K: beta, alpha, r, Z
/// and sigma.
inline ContractionDesign synthesize_design(const MpcProblem& problem, const Matrix& K, const DesignOptions& opts = {}) {
  const auto& sys = problem.system;
  ContractionDesign d;
  d.K = K;
  d.N = problem.N;
  d.beta = select_beta(sys, K, opts.beta);
  d.alpha = opts.alpha.value_or(std::pow(d.beta, problem.N));
  if (d.alpha < std::pow(d.beta, problem.N)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must satisfy alpha >= beta^N");
  }
  d.r = opts.r ? *opts.r : opts.r_fraction * max_inner_radius(sys, K, d.beta, d.alpha, problem.X, problem.U);
  d.Z = synth_ellipsoid(sys, K, d.beta, d.r, d.alpha, problem.X, problem.U);
  d.sigma = compute_sigma(sys.B, problem.Q, problem.R);
  return d;
}

inline TightenedMargins tighten_margins(const ContractionDesign& d, const MpcProblem& problem) {
  return tighten_margins(d.Z, d.K, d.beta, problem.N, problem.X, problem.U);
}

}  // namespace rfmpc
