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

// Real-time parallel MPC iteration. One inner iteration solves the N+1
// decoupled stage problems (in parallel), then the consensus problem, and
// updates z <- z+, v <- v+, lambda <- lambda + delta. A control step runs
// m_bar inner iterations and applies the input of the initial stage problem,
// which lies in U and, in tightened mode, steers xhat into Y_1.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rfmpc/consensus.hpp"
#include "rfmpc/contraction.hpp"
#include "rfmpc/model.hpp"
#include "rfmpc/parallel.hpp"
#include "rfmpc/stage_qp.hpp"

namespace rfmpc {

/// input_only: stage problems constrain inputs only (no state constraints).
/// tightened: state and input constraints with the margins Y_k, W_k.
/// nominal:   state and input constraints without tightening (the original
///            sets); used for the exact-MPC baseline.
enum class Mode { input_only, tightened, nominal };

inline const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::input_only: return "input_only";
    case Mode::tightened: return "tightened";
    case Mode::nominal: return "nominal";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "input_only") return Mode::input_only;
  if (s == "tightened") return Mode::tightened;
  if (s == "nominal") return Mode::nominal;
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + s + "'");
}

/// Warm-started primal-dual iterate: states z_0..z_N, inputs v_0..v_{N-1},
/// co-states lambda_0..lambda_{N-1}.
struct IterateTriple {
  Trajectory z;
  Trajectory v;
  Trajectory lambda;

  static IterateTriple zeros(int N, Eigen::Index nx, Eigen::Index nu) {
    const auto n = static_cast<std::size_t>(N);
    return {Trajectory(n + 1, Vector::Zero(nx)), Trajectory(n, Vector::Zero(nu)), Trajectory(n, Vector::Zero(nx))};
  }

  [[nodiscard]] int horizon() const { return static_cast<int>(v.size()); }

  [[nodiscard]] bool consistent() const {
    return !v.empty() && z.size() == v.size() + 1 && lambda.size() == v.size();
  }
};

inline IterateTriple operator-(const IterateTriple& a, const IterateTriple& b) {
  IterateTriple d = a;
  for (std::size_t k = 0; k < d.z.size(); ++k) d.z[k] -= b.z[k];
  for (std::size_t k = 0; k < d.v.size(); ++k) d.v[k] -= b.v[k];
  for (std::size_t k = 0; k < d.lambda.size(); ++k) d.lambda[k] -= b.lambda[k];
  return d;
}

/// Drops the first stage and appends zeros.
inline IterateTriple shift(const IterateTriple& it) {
  IterateTriple out;
  auto shift_one = [](const Trajectory& in) {
    Trajectory t(in.begin() + 1, in.end());
    t.push_back(Vector::Zero(in.back().size()));
    return t;
  };
  out.z = shift_one(it.z);
  out.v = shift_one(it.v);
  out.lambda = shift_one(it.lambda);
  return out;
}

/// Auxiliary quadratic form: the MPC objective in (z, v) plus the
/// quarter-weighted conjugate terms |B'lambda_k|^2_{R^-1},
/// |lambda_{k-1} - A'lambda_k|^2_{Q^-1} and |lambda_{N-1}|^2_{P^-1}.
class PhiEvaluator {
 public:
  PhiEvaluator(const LtiSystem& sys, const Matrix& Q, const Matrix& R, const Matrix& P)
      : A_(sys.A), B_(sys.B), Q_(Q), R_(R), P_(P), Q_llt_(Q), R_llt_(R), P_llt_(P) {}

  [[nodiscard]] double operator()(const Trajectory& z, const Trajectory& v, const Trajectory& lambda) const {
    const std::size_t N = v.size();
    detail::require(z.size() == N + 1 && lambda.size() == N && N >= 1, "phi: trajectory length mismatch");
    double primal = z[N].dot(P_ * z[N]);
    for (std::size_t k = 0; k < N; ++k) primal += z[k].dot(Q_ * z[k]) + v[k].dot(R_ * v[k]);
    double dual = 0.0;
    for (std::size_t k = 0; k < N; ++k) dual += inv_norm_sq(R_llt_, B_.transpose() * lambda[k]);
    for (std::size_t k = 1; k < N; ++k) dual += inv_norm_sq(Q_llt_, lambda[k - 1] - A_.transpose() * lambda[k]);
    dual += inv_norm_sq(P_llt_, lambda[N - 1]);
    return primal + 0.25 * dual;
  }

  [[nodiscard]] double operator()(const IterateTriple& t) const { return (*this)(t.z, t.v, t.lambda); }

 private:
  static double inv_norm_sq(const Eigen::LLT<Matrix>& llt, const Vector& y) {
    return llt.matrixL().solve(y).squaredNorm();
  }

  Matrix A_, B_, Q_, R_, P_;
  Eigen::LLT<Matrix> Q_llt_, R_llt_, P_llt_;
};

inline double phi(const Trajectory& z, const Trajectory& v, const Trajectory& lambda, const Matrix& Q,
                  const Matrix& R, const Matrix& P, const LtiSystem& sys) {
  return PhiEvaluator(sys, Q, R, P)(z, v, lambda);
}

/// Distance of an iterate to a primal-dual solution, Phi(z - x*, v - u*, lambda - lambda*).
inline double delta(const IterateTriple& iterate, const IterateTriple& reference, const MpcProblem& p) {
  return PhiEvaluator(p.system, p.Q, p.R, p.P)(iterate - reference);
}

struct KappaFit {
  double kappa = 0.0;
  double r_squared = 0.0;
  double residual_rms = 0.0;  // of the log-linear fit
};

/// Least-squares fit log(delta_m) ~ a + m log(kappa).
inline KappaFit estimate_kappa(std::span<const double> deltas) {
  detail::require(deltas.size() >= 3, "estimate_kappa: need at least 3 entries");
  const auto n = static_cast<double>(deltas.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t m = 0; m < deltas.size(); ++m) {
    detail::require(deltas[m] > 0.0, "estimate_kappa: entries must be positive");
    sx += static_cast<double>(m);
    sy += std::log(deltas[m]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t m = 0; m < deltas.size(); ++m) {
    const double dx = static_cast<double>(m) - mx;
    const double dy = std::log(deltas[m]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t m = 0; m < deltas.size(); ++m) {
    const double fit = my + slope * (static_cast<double>(m) - mx);
    ss_res += std::pow(std::log(deltas[m]) - fit, 2);
  }
  KappaFit fit;
  fit.kappa = std::exp(slope);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.residual_rms = std::sqrt(ss_res / n);
  if (!(fit.kappa < 1.0)) {
    throw Error(ErrorCode::NotContracting, "fitted contraction ratio " + std::to_string(fit.kappa) + " >= 1");
  }
  return fit;
}

/// Smallest m_bar >= log_kappa((1-beta)/(1+kappa) * r/(sigma*delta0)) - 1, at least 1.
inline int min_iterations(double kappa, double beta, double r, double sigma, double delta0) {
  detail::require(kappa > 0.0 && kappa < 1.0 && beta > 0.0 && beta < 1.0 && r > 0.0 && sigma > 0.0 && delta0 > 0.0,
                  "min_iterations: arguments out of range");
  const double arg = (1.0 - beta) / (1.0 + kappa) * r / (sigma * delta0);
  if (arg >= 1.0) return 1;
  const double bound = std::log(arg) / std::log(kappa) - 1.0;
  return std::max(1, static_cast<int>(std::ceil(bound)));
}

struct ControllerConfig {
  int m_bar = 1;
  Mode mode = Mode::tightened;
  double qp_tol = 1e-10;
  /// Required in tightened mode.
  std::optional<ContractionDesign> design;
  std::size_t workers = 1;
  bool warm_start_active_sets = true;
};

struct IterationRecord {
  int m = 0;
  double delta = std::numeric_limits<double>::quiet_NaN();
  int active_constraints = 0;
  double wall_seconds = 0.0;
};

struct RtiStepResult {
  Vector u0;
  std::vector<IterationRecord> records;
};

inline void write_iteration_csv_header(std::ostream& os) { os << "m,delta,active_constraints,wall_seconds\n"; }

class RtiController {
 public:
  RtiController(const MpcProblem& problem, ControllerConfig cfg)
      : problem_(problem),
        cfg_(std::move(cfg)),
        stages_(problem, make_margins(problem, cfg_)),
        consensus_(problem.system, problem.Q, problem.R, problem.P, problem.N),
        phi_(problem.system, problem.Q, problem.R, problem.P),
        pool_(cfg_.workers),
        warm_(static_cast<std::size_t>(problem.N)),
        x_(static_cast<std::size_t>(problem.N) + 1),
        u_(static_cast<std::size_t>(problem.N)) {
    detail::require(cfg_.m_bar >= 1, "m_bar must be at least 1");
    const auto violations = validate_problem(problem);
    if (!violations.empty()) throw Error(ErrorCode::InvalidArgument, "invalid problem: " + violations.front());
  }

  [[nodiscard]] const MpcProblem& problem() const { return problem_; }
  [[nodiscard]] const ControllerConfig& config() const { return cfg_; }
  [[nodiscard]] const std::optional<TightenedMargins>& margins() const { return stages_.margins(); }
  [[nodiscard]] const PhiEvaluator& phi() const { return phi_; }

  /// Closed-loop time stamped into StageInfeasibleError.
  void set_step_index(int step) { step_index_ = step; }

  /// Inputs u_0..u_{N-1} of the most recent stage solves.
  [[nodiscard]] const Trajectory& stage_inputs() const { return u_; }
  [[nodiscard]] const Trajectory& stage_states() const { return x_; }

  void reset_warm_start() {
    for (auto& w : warm_) w.clear();
  }

  /// One inner iteration. Returns the number of active stage constraints.
  int iterate(IterateTriple& it, const Vector& x_hat) {
    const int N = problem_.N;
    detail::require(it.consistent() && it.horizon() == N, "iterate does not match the horizon");
    const double tol = cfg_.qp_tol;
    const bool warm = cfg_.warm_start_active_sets;
    x_[0] = x_hat;
    pool_.parallel_for(0, static_cast<std::size_t>(N) + 1, [&](std::size_t i) {
      const int k = static_cast<int>(i);
      try {
        if (k == 0) {
          auto res = stages_.solve_initial(it.lambda[0], it.v[0], x_hat, tol, warm ? &warm_[0] : nullptr);
          u_[0] = std::move(res.u);
          warm_[0] = std::move(res.active_set);
        } else if (k < N) {
          auto res = stages_.solve_middle(k, it.lambda[i - 1], it.lambda[i], it.z[i], it.v[i], tol,
                                          warm ? &warm_[i] : nullptr);
          x_[i] = std::move(res.x);
          u_[i] = std::move(res.u);
          warm_[i] = std::move(res.active_set);
        } else {
          x_[i] = stages_.solve_terminal(it.lambda[i - 1], it.z[i]);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Infeasible) throw;
        throw StageInfeasibleError(k, step_index_,
                                   "stage " + std::to_string(k) + " infeasible at step " + std::to_string(step_index_));
      }
    });

    auto cons = consensus_.solve(x_, u_, it.z, it.v, x_hat);
    it.z = std::move(cons.z_plus);
    it.v = std::move(cons.v_plus);
    for (std::size_t k = 0; k < it.lambda.size(); ++k) it.lambda[k] += cons.delta[k];

    int active = 0;
    for (const auto& w : warm_) active += static_cast<int>(w.size());
    return active;
  }

  /// m_bar inner iterations (cfg.m_bar unless overridden) and the applied
  /// input. With a reference solution, each record carries Delta of the
  /// post-iteration iterate.
  RtiStepResult step(IterateTriple& it, const Vector& x_hat, const IterateTriple* reference = nullptr,
                     int m_bar_override = 0) {
    const int m_bar = m_bar_override > 0 ? m_bar_override : cfg_.m_bar;
    RtiStepResult result;
    result.records.reserve(static_cast<std::size_t>(m_bar));
    for (int m = 1; m <= m_bar; ++m) {
      const auto start = std::chrono::steady_clock::now();
      IterationRecord rec;
      rec.m = m;
      rec.active_constraints = iterate(it, x_hat);
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (reference != nullptr) rec.delta = phi_(it - *reference);
      result.records.push_back(rec);
    }
    result.u0 = u_[0];
    return result;
  }

 private:
  static std::optional<TightenedMargins> make_margins(const MpcProblem& p, const ControllerConfig& cfg) {
    switch (cfg.mode) {
      case Mode::input_only: return std::nullopt;
      case Mode::nominal: return TightenedMargins::nominal(p.X, p.U, p.N);
      case Mode::tightened:
        if (!cfg.design) throw Error(ErrorCode::InvalidArgument, "tightened mode requires a contraction design");
        return tighten_margins(*cfg.design, p);
    }
    return std::nullopt;
  }

  MpcProblem problem_;
  ControllerConfig cfg_;
  StageProblems stages_;
  ConsensusSolver consensus_;
  PhiEvaluator phi_;
  WorkerPool pool_;
  std::vector<std::vector<int>> warm_;
  Trajectory x_;
  Trajectory u_;
  int step_index_ = -1;
};

struct RtiStepOutput {
  Vector u0;
  IterateTriple iterate;
  std::vector<IterationRecord> records;
};

/// Stateless convenience wrapper: one control step from `iterate`.
inline RtiStepOutput rti_step(const IterateTriple& iterate, const Vector& x_hat, const ControllerConfig& cfg,
                              const MpcProblem& problem, const IterateTriple* reference = nullptr) {
  RtiController controller(problem, cfg);
  RtiStepOutput out;
  out.iterate = iterate;
  auto res = controller.step(out.iterate, x_hat, reference);
  out.u0 = std::move(res.u0);
  out.records = std::move(res.records);
  return out;
}

}  // namespace rfmpc
