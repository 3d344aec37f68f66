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

// Closed-loop simulation of the parallel controller and of exact MPC, with
// infinite-horizon cost accounting. The plant uses the model matrices; an
// optional disturbance hook perturbs the successor state.

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rfmpc/controller.hpp"
#include "rfmpc/csv.hpp"

namespace rfmpc {

struct ReferenceSolution {
  IterateTriple triple;  // (x*, u*, lambda*)
  double value = 0.0;    // J_N or V_N
  int iterations = 0;
};

inline double trajectory_cost(const Trajectory& x, const Trajectory& u, const MpcProblem& p) {
  const std::size_t N = u.size();
  double J = x[N].dot(p.P * x[N]);
  for (std::size_t k = 0; k < N; ++k) J += x[k].dot(p.Q * x[k]) + u[k].dot(p.R * u[k]);
  return J;
}

/// Runs the inner iteration to convergence: stops when
/// sqrt(Phi(change)) <= tol * max(1, sqrt(Phi(iterate))).
class ReferenceSolver {
 public:
  ReferenceSolver(const MpcProblem& problem, Mode mode, std::optional<ContractionDesign> design = std::nullopt,
                  double tol = 1e-10, int max_iterations = 20000, std::size_t workers = 1)
      : controller_(problem, make_config(mode, std::move(design), workers)), tol_(tol), max_iterations_(max_iterations) {}

  [[nodiscard]] const RtiController& controller() const { return controller_; }

  ReferenceSolution solve(const Vector& x_hat, const IterateTriple* warm = nullptr) {
    const auto& p = controller_.problem();
    ReferenceSolution out;
    out.triple = warm != nullptr ? *warm : IterateTriple::zeros(p.N, p.nx(), p.nu());
    const auto& phi = controller_.phi();
    for (int it = 1; it <= max_iterations_; ++it) {
      const IterateTriple prev = out.triple;
      try {
        controller_.iterate(out.triple, x_hat);
      } catch (const StageInfeasibleError& e) {
        throw Error(ErrorCode::Infeasible, std::string("tightened problem infeasible from this state (") + e.what() + ")");
      }
      const double change = std::sqrt(phi(out.triple - prev));
      const double scale = std::sqrt(phi(out.triple));
      if (change <= tol_ * std::max(1.0, scale)) {
        out.iterations = it;
        out.value = trajectory_cost(out.triple.z, out.triple.v, p);
        return out;
      }
    }
    throw Error(ErrorCode::NoConvergence, "reference iteration did not converge in " + std::to_string(max_iterations_) +
                                              " iterations");
  }

 private:
  static ControllerConfig make_config(Mode mode, std::optional<ContractionDesign> design, std::size_t workers) {
    ControllerConfig cfg;
    cfg.mode = mode;
    cfg.design = std::move(design);
    cfg.workers = workers;
    cfg.qp_tol = 1e-12;
    return cfg;
  }

  RtiController controller_;
  double tol_;
  int max_iterations_;
};

inline ReferenceSolution solve_reference(const Vector& x_hat, const MpcProblem& problem, Mode mode,
                                         std::optional<ContractionDesign> design = std::nullopt, double tol = 1e-10) {
  return ReferenceSolver(problem, mode, std::move(design), tol).solve(x_hat);
}

enum class HaltReason { stage_infeasible, reference_infeasible, no_convergence };

inline const char* to_string(HaltReason r) {
  switch (r) {
    case HaltReason::stage_infeasible: return "stage_infeasible";
    case HaltReason::reference_infeasible: return "reference_infeasible";
    case HaltReason::no_convergence: return "no_convergence";
  }
  return "?";
}

struct ClosedLoopTrace {
  Trajectory states;  // T+1
  Trajectory inputs;  // T
  std::vector<double> stage_costs;
  double tail_cost = 0.0;  // x_T' P x_T, added when converged
  double j_infinity = 0.0;
  bool converged = false;
  std::vector<bool> feasible_x;  // T+1
  std::vector<bool> feasible_u;  // T
  std::optional<HaltReason> halted_reason;
  int halted_step = -1;
  std::string halt_message;

  // Per-step diagnostics.
  std::vector<int> m_bar_used;
  std::vector<double> initial_delta;   // Delta of the warm start (reference available)
  std::vector<double> applied_error;   // |A xhat + B u0 - x1*| (reference available)
  long total_inner_iterations = 0;
  double wall_seconds = 0.0;

  [[nodiscard]] int steps() const { return static_cast<int>(inputs.size()); }

  [[nodiscard]] bool all_feasible() const {
    for (bool f : feasible_x) if (!f) return false;
    for (bool f : feasible_u) if (!f) return false;
    return true;
  }
};

struct SimulationOptions {
  enum class Policy { rti, exact };
  Policy policy = Policy::rti;
  int t_max = 2000;
  double eps_stop = 1e-8;
  /// If set, m_bar at every step is min_iterations(kappa, beta, r, sigma, Delta)
  /// with Delta measured against a reference solve (tightened mode only).
  std::optional<double> adaptive_kappa;
  int adaptive_cap = 100000;
  /// Solve the reference at every step for Delta / applied-error diagnostics.
  bool track_reference = false;
  double reference_tol = 1e-10;
  /// Throw StageInfeasibleError (with step index) instead of returning a
  /// trace with halted_reason.
  bool throw_on_halt = true;
  /// Additive perturbation of the successor state, f(t, x_{t+1}).
  std::function<Vector(int, const Vector&)> disturbance;
  double feasibility_tol = 1e-9;
  std::optional<IterateTriple> initial_iterate;
  /// Exact policy, nominal or input_only mode: stop as soon as the LQR rollout
  /// from the current state is admissible. Exact MPC then coincides with LQR
  /// and x'Px is the exact remaining cost.
  bool lqr_tail = true;
};

/// True if the closed loop x+ = (A+BK)x from x stays in X (if check_state)
/// and U until its sup norm drops below eps.
inline bool lqr_rollout_admissible(const MpcProblem& problem, const Matrix& K, Vector x, bool check_state, double eps,
                                   double tol = 0.0, int max_steps = 100000) {
  const Matrix Acl = problem.system.A + problem.system.B * K;
  for (int t = 0; t < max_steps; ++t) {
    if (check_state && !problem.X.contains(x, tol)) return false;
    if (!problem.U.contains(K * x, tol)) return false;
    if (x.lpNorm<Eigen::Infinity>() < eps) return true;
    x = Acl * x;
  }
  return false;
}

inline ClosedLoopTrace simulate_closed_loop(const ControllerConfig& cfg, const MpcProblem& problem, const Vector& x0,
                                            const SimulationOptions& opts = {}) {
  detail::require(opts.t_max >= 1, "t_max must be at least 1");
  detail::require(x0.size() == problem.nx(), "initial state dimension mismatch");
  const auto start = std::chrono::steady_clock::now();
  const bool exact = opts.policy == SimulationOptions::Policy::exact;
  const bool need_reference = exact || opts.track_reference || opts.adaptive_kappa.has_value();
  if (opts.adaptive_kappa) {
    detail::require(cfg.mode == Mode::tightened && cfg.design.has_value(), "adaptive m_bar needs tightened mode");
  }

  RtiController controller(problem, cfg);
  std::optional<ReferenceSolver> reference;
  if (need_reference) reference.emplace(problem, cfg.mode, cfg.design, opts.reference_tol, 20000, cfg.workers);

  const auto& sys = problem.system;
  ClosedLoopTrace trace;
  IterateTriple iterate = opts.initial_iterate.value_or(IterateTriple::zeros(problem.N, problem.nx(), problem.nu()));
  std::optional<IterateTriple> ref_warm;

  const bool use_lqr_tail = exact && opts.lqr_tail && cfg.mode != Mode::tightened;
  const Matrix K_lqr = use_lqr_tail ? lqr_gain(problem.system.A, problem.system.B, problem.R, problem.P) : Matrix{};

  Vector x = x0;
  trace.states.push_back(x);
  trace.feasible_x.push_back(problem.X.contains(x, opts.feasibility_tol));

  auto halt = [&](HaltReason reason, int t, const Error& e) {
    if (opts.throw_on_halt) {
      if (reason == HaltReason::stage_infeasible) {
        const auto* se = dynamic_cast<const StageInfeasibleError*>(&e);
        throw StageInfeasibleError(se ? se->stage() : -1, t, e.what());
      }
      throw Error(e.code(), std::string("step ") + std::to_string(t) + ": " + e.what());
    }
    trace.halted_reason = reason;
    trace.halted_step = t;
    trace.halt_message = e.what();
  };

  for (int t = 0; t < opts.t_max; ++t) {
    if (x.lpNorm<Eigen::Infinity>() < opts.eps_stop) {
      trace.converged = true;
      break;
    }
    if (use_lqr_tail && lqr_rollout_admissible(problem, K_lqr, x, cfg.mode == Mode::nominal, opts.eps_stop)) {
      trace.converged = true;
      break;
    }
    controller.set_step_index(t);

    std::optional<ReferenceSolution> ref;
    if (reference) {
      try {
        ref = reference->solve(x, ref_warm ? &*ref_warm : nullptr);
        ref_warm = shift(ref->triple);
        trace.total_inner_iterations += exact ? ref->iterations : 0;
      } catch (const Error& e) {
        halt(e.code() == ErrorCode::Infeasible ? HaltReason::reference_infeasible : HaltReason::no_convergence, t, e);
        break;
      }
    }

    Vector u;
    if (exact) {
      u = ref->triple.v[0];
      trace.m_bar_used.push_back(ref->iterations);
    } else {
      int m_bar = cfg.m_bar;
      if (ref) {
        const double d0 = controller.phi()(iterate - ref->triple);
        trace.initial_delta.push_back(d0);
        if (opts.adaptive_kappa) {
          const auto& d = *cfg.design;
          m_bar = d0 > 0.0 ? std::min(opts.adaptive_cap, min_iterations(*opts.adaptive_kappa, d.beta, d.r, d.sigma, d0)) : 1;
        }
      }
      try {
        auto res = controller.step(iterate, x, nullptr, m_bar);
        u = std::move(res.u0);
      } catch (const StageInfeasibleError& e) {
        halt(HaltReason::stage_infeasible, t, e);
        break;
      }
      trace.m_bar_used.push_back(m_bar);
      trace.total_inner_iterations += m_bar;
      iterate = shift(iterate);
    }

    Vector x_next = sys.A * x + sys.B * u;
    if (ref) trace.applied_error.push_back((x_next - ref->triple.z[1]).norm());
    if (opts.disturbance) x_next += opts.disturbance(t, x_next);

    trace.inputs.push_back(u);
    trace.stage_costs.push_back(x.dot(problem.Q * x) + u.dot(problem.R * u));
    trace.feasible_u.push_back(problem.U.contains(u, opts.feasibility_tol));
    x = std::move(x_next);
    trace.states.push_back(x);
    trace.feasible_x.push_back(problem.X.contains(x, opts.feasibility_tol));
  }
  if (!trace.converged && !trace.halted_reason && x.lpNorm<Eigen::Infinity>() < opts.eps_stop) trace.converged = true;

  double J = 0.0;
  for (double c : trace.stage_costs) J += c;
  if (trace.converged) {
    trace.tail_cost = x.dot(problem.P * x);
    J += trace.tail_cost;
  }
  trace.j_infinity = J;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

/// Relative loss (j_test - j_ref) / j_ref.
inline double performance_gap(double j_test, double j_ref) {
  detail::require(j_ref > 0.0, "performance_gap: reference cost must be positive");
  return (j_test - j_ref) / j_ref;
}

/// CSV rows t, x0.., u0.., stage_cost, feasible_x, feasible_u. The final row
/// holds the terminal state; its stage_cost column is the tail x'Px and its
/// input columns are empty.
inline void write_trace_csv(std::ostream& os, const ClosedLoopTrace& trace) {
  const auto nx = trace.states.front().size();
  const auto nu = trace.inputs.empty() ? Eigen::Index{0} : trace.inputs.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < nx; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",u" << i;
  os << ",stage_cost,feasible_x,feasible_u\n";
  for (std::size_t t = 0; t < trace.states.size(); ++t) {
    os << t;
    for (Eigen::Index i = 0; i < nx; ++i) os << ',' << format_real(trace.states[t](i));
    const bool has_input = t < trace.inputs.size();
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << (has_input ? format_real(trace.inputs[t](i)) : "");
    os << ',' << format_real(has_input ? trace.stage_costs[t] : trace.tail_cost);
    os << ',' << (trace.feasible_x[t] ? 1 : 0);
    os << ',';
    if (has_input) os << (trace.feasible_u[t] ? 1 : 0);
    os << '\n';
  }
}

}  // namespace rfmpc
