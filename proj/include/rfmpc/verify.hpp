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

// Invariant suite for a stored design: problem validity, contraction
// conditions, margin consistency, terminal-set properties and randomized
// certificate shift trials.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rfmpc/contraction.hpp"
#include "rfmpc/design_io.hpp"

namespace rfmpc {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;

  [[nodiscard]] bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
  }
};

namespace detail {

inline Vector random_unit(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vector e(n);
  do {
    for (Eigen::Index i = 0; i < n; ++i) e(i) = normal(rng);
  } while (e.norm() == 0.0);
  return e / e.norm();
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

/// Random admissible certificate: y_0 drawn in (alpha / beta^N) E(Z), inputs
/// K y_k plus a random perturbation on the first half of the horizon,
/// rejected until check_certificate passes. The perturbation shrinks after
/// every rejection.
inline std::optional<Certificate> sample_admissible_certificate(std::mt19937_64& rng, const MpcProblem& problem,
                                                                const ContractionDesign& design,
                                                                const TightenedMargins& margins,
                                                                int max_attempts = 200) {
  const auto& sys = problem.system;
  const int N = margins.horizon();
  const Ellipsoid E(design.Z);
  std::uniform_real_distribution<double> unit;
  const double reach = design.alpha / std::pow(design.beta, N);
  double noise = 0.1 * problem.U.g.minCoeff();
  for (int attempt = 0; attempt < max_attempts; ++attempt, noise *= 0.5) {
    Certificate c;
    c.y.resize(static_cast<std::size_t>(N) + 1);
    c.w.resize(static_cast<std::size_t>(N));
    c.y[0] = unit(rng) * reach * E.boundary_point(detail::random_unit(rng, sys.nx()));
    const double scale = unit(rng) * noise;
    for (int k = 0; k < N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      c.w[ks] = design.K * c.y[ks];
      if (2 * k < N) c.w[ks] += scale * detail::random_unit(rng, sys.nu());
      c.y[ks + 1] = sys.A * c.y[ks] + sys.B * c.w[ks];
    }
    if (check_certificate(c, sys, problem.X, problem.U, margins, design.Z, design.alpha, c.y[0], c.w[0])) return c;
  }
  return std::nullopt;
}

struct ShiftTrial {
  bool admissible = false;     // shifted certificate passes check_certificate
  bool inclusion = false;      // y+_k - y_{k+1} in beta^k (1-beta) E(Z) for all k
  double worst_ratio = 0.0;    // max_k sqrt(q_k) / (beta^k (1-beta))
};

/// One shift trial: perturb the successor state by (1-beta) r rho in a random
/// direction, shift the certificate and check the result.
inline ShiftTrial run_shift_trial(std::mt19937_64& rng, const MpcProblem& problem, const ContractionDesign& design,
                                  const TightenedMargins& margins, const Certificate& cert,
                                  double inclusion_factor = 1.0 + 1e-6) {
  const auto& sys = problem.system;
  const auto N = cert.w.size();
  std::uniform_real_distribution<double> unit;
  const double radius = (1.0 - design.beta) * design.r * unit(rng);
  const Vector x_plus = sys.A * cert.y[0] + sys.B * cert.w[0] + radius * detail::random_unit(rng, sys.nx());
  const Certificate next = shift_certificate(cert, sys, x_plus, design.K);

  ShiftTrial t;
  t.admissible = check_certificate(next, sys, problem.X, problem.U, margins, design.Z, design.alpha, x_plus,
                                   next.w[0]);
  const Ellipsoid E(design.Z);
  const Vector y_tail = (sys.A + sys.B * design.K) * cert.y[N];
  t.inclusion = true;
  for (std::size_t k = 0; k <= N; ++k) {
    const Vector& ahead = k + 1 <= N ? cert.y[k + 1] : y_tail;
    const double scale = std::pow(design.beta, static_cast<double>(k)) * (1.0 - design.beta);
    const double q = E.quadratic_form(next.y[k] - ahead);
    t.worst_ratio = std::max(t.worst_ratio, std::sqrt(q) / scale);
    if (!E.contains(next.y[k] - ahead, scale * inclusion_factor, 0.0)) t.inclusion = false;
  }
  return t;
}

struct VerifyOptions {
  std::uint64_t seed = 0;
  int terminal_samples = 200;
  int shift_trials = 200;
  double tol = 1e-9;
};

inline VerifyReport verify_design(const DesignFile& f, const VerifyOptions& opts = {}) {
  VerifyReport rep;
  auto add = [&](std::string name, bool passed, std::string detail = {}) {
    rep.checks.push_back({std::move(name), passed, std::move(detail)});
  };
  const auto& p = f.problem;
  const auto& d = f.design;
  const auto& m = f.margins;

  const auto violations = validate_problem(p);
  std::string joined;
  for (const auto& v : violations) joined += (joined.empty() ? "" : "; ") + v;
  add("problem valid", violations.empty(), joined);
  if (!violations.empty()) return rep;

  const bool shapes = d.K.rows() == p.nu() && d.K.cols() == p.nx() && d.Z.rows() == p.nx() && d.Z.cols() == p.nx() &&
                      d.N == p.N && m.horizon() == p.N && m.c_hat.size() == static_cast<std::size_t>(p.N) + 1;
  add("design dimensions", shapes);
  if (!shapes) return rep;

  const auto dc = check_design(d, p.system, p.X, p.U, opts.tol);
  joined.clear();
  for (const auto& v : dc.violations) joined += (joined.empty() ? "" : "; ") + v;
  add("contraction conditions", dc.ok(),
      joined.empty() ? "contraction slack " + detail::fmt(dc.contraction_slack) + ", radius slack " +
                           detail::fmt(dc.radius_slack)
                     : joined);

  const double sigma = compute_sigma(p.system.B, p.Q, p.R);
  add("sigma", std::abs(sigma - d.sigma) <= 1e-12 * std::max(1.0, sigma), "sigma " + detail::fmt(d.sigma));

  TightenedMargins fresh;
  bool recompute_ok = true;
  try {
    fresh = tighten_margins(d.Z, d.K, d.beta, p.N, p.X, p.U);
  } catch (const Error& e) {
    recompute_ok = false;
    add("margins recomputed", false, e.what());
  }
  if (recompute_ok) {
    double diff = 0.0;
    for (std::size_t k = 0; k < m.c_hat.size(); ++k) diff = std::max(diff, (m.c_hat[k] - fresh.c_hat[k]).cwiseAbs().maxCoeff());
    for (std::size_t k = 0; k < m.d_hat.size(); ++k) diff = std::max(diff, (m.d_hat[k] - fresh.d_hat[k]).cwiseAbs().maxCoeff());
    add("margins recomputed", diff <= 1e-12, "max difference " + detail::fmt(diff));
  }

  bool positive = true, monotone = true;
  for (std::size_t k = 0; k < m.c_hat.size(); ++k) {
    positive = positive && (m.c_hat[k].array() > 0.0).all();
    if (k > 0) monotone = monotone && (m.c_hat[k].array() <= m.c_hat[k - 1].array()).all();
  }
  for (std::size_t k = 0; k < m.d_hat.size(); ++k) {
    positive = positive && (m.d_hat[k].array() > 0.0).all();
    if (k > 0) monotone = monotone && (m.d_hat[k].array() <= m.d_hat[k - 1].array()).all();
  }
  add("margins positive", positive);
  add("margins non-increasing", monotone);

  const auto N = static_cast<std::size_t>(p.N);
  const Matrix DK = p.U.G * d.K;
  const double bN = std::pow(d.beta, p.N);
  const Vector state_support = (p.X.G * d.Z * p.X.G.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  const Vector input_support = (DK * d.Z * DK.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  const Vector d_hat_N = p.U.g - (1.0 - bN) * input_support;
  add("alpha >= beta^N", d.alpha >= bN * (1.0 - 1e-15), "alpha " + detail::fmt(d.alpha) + ", beta^N " + detail::fmt(bN));
  const double tn = std::max(1.0, m.c_hat[N].cwiseAbs().maxCoeff()) * opts.tol;
  add("terminal set inside Y_N", ((d.alpha * state_support - m.c_hat[N]).array() <= tn).all());
  add("terminal inputs inside W_N", ((d.alpha * input_support - d_hat_N).array() <= tn).all());

  std::mt19937_64 rng(opts.seed);
  const Ellipsoid E(d.Z);
  const Matrix Acl = p.system.A + p.system.B * d.K;
  int bad_terminal = 0;
  for (int s = 0; s < opts.terminal_samples; ++s) {
    const Vector x = d.alpha * E.boundary_point(detail::random_unit(rng, p.nx()));
    const bool ok = E.contains(Acl * x, d.alpha * d.beta, opts.tol) &&
                    ((p.X.G * x - m.c_hat[N]).array() <= opts.tol).all() &&
                    ((DK * x - d_hat_N).array() <= opts.tol).all();
    if (!ok) ++bad_terminal;
  }
  add("terminal samples", bad_terminal == 0,
      std::to_string(opts.terminal_samples - bad_terminal) + "/" + std::to_string(opts.terminal_samples) + " passed");

  int sampled = 0, bad_shift = 0;
  double worst = 0.0;
  for (int s = 0; s < opts.shift_trials; ++s) {
    const auto cert = sample_admissible_certificate(rng, p, d, m);
    if (!cert) continue;
    ++sampled;
    const auto t = run_shift_trial(rng, p, d, m, *cert);
    worst = std::max(worst, t.worst_ratio);
    if (!t.admissible || !t.inclusion) ++bad_shift;
  }
  add("certificate shift trials", sampled == opts.shift_trials && bad_shift == 0,
      std::to_string(sampled - bad_shift) + "/" + std::to_string(opts.shift_trials) +
          " passed, worst inclusion ratio " + detail::fmt(worst));
  return rep;
}

}  // namespace rfmpc
