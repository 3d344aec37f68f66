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

// m_bar sweeps on the chain benchmark: exact MPC, RFRTI (tightened) and the
// heuristic RTI (input constraints only) closed loops.

#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <vector>

#include "rfmpc/chain.hpp"
#include "rfmpc/csv.hpp"
#include "rfmpc/simulation.hpp"

namespace rfmpc {

struct BenchRow {
  int seed = 0;
  int m_bar = 0;
  double j_exact = 0.0;
  double j_rfrti = 0.0;
  double j_rti = 0.0;
  double gap_rfrti = 0.0;         // (J_rfrti - J_exact) / J_exact
  double gap_rfrti_vs_rti = 0.0;  // (J_rfrti - J_rti) / J_rti
  double seconds_per_iteration = 0.0;
  bool rfrti_feasible = false;
  bool rti_feasible = false;
  bool converged = false;
};

struct BenchOptions {
  /// Write wall time per inner iteration; zero otherwise so output is reproducible.
  bool record_timing = true;
  /// Called after each row, for progress output.
  std::function<void(const BenchRow&)> on_row;
};

/// Initial state for a seed: seed 0 is x0_scale * 1; other seeds scale each
/// entry by an independent factor drawn uniformly from [0.5, 1].
inline Vector bench_initial_state(const BenchConfig& cfg, Eigen::Index nx, int seed) {
  Vector x0 = cfg.x0(nx);
  if (seed == 0) return x0;
  std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
  std::uniform_real_distribution<double> factor(0.5, 1.0);
  for (Eigen::Index i = 0; i < nx; ++i) x0(i) *= factor(rng);
  return x0;
}

struct BenchSetup {
  MpcProblem problem;
  ContractionDesign design;
};

inline BenchSetup make_bench_setup(const BenchConfig& cfg) {
  auto chain = make_chain_problem(cfg);
  auto design = synthesize_design(chain.problem, chain.riccati.K, cfg.design_options());
  return {std::move(chain.problem), std::move(design)};
}

inline std::vector<BenchRow> run_bench(const BenchConfig& cfg, const BenchSetup& setup, const BenchOptions& opts = {}) {
  const auto& problem = setup.problem;
  std::vector<BenchRow> rows;
  for (int seed : cfg.seeds) {
    const Vector x0 = bench_initial_state(cfg, problem.nx(), seed);

    SimulationOptions sim;
    sim.t_max = cfg.t_max;
    sim.eps_stop = cfg.eps_stop;
    sim.reference_tol = cfg.reference_tol;

    ControllerConfig exact_cfg;
    exact_cfg.mode = Mode::nominal;
    exact_cfg.design = setup.design;
    exact_cfg.qp_tol = cfg.qp_tol;
    exact_cfg.workers = cfg.workers;
    SimulationOptions exact_sim = sim;
    exact_sim.policy = SimulationOptions::Policy::exact;
    const auto exact = simulate_closed_loop(exact_cfg, problem, x0, exact_sim);

    for (int m_bar : cfg.m_bar_sweep) {
      ControllerConfig c = exact_cfg;
      c.m_bar = m_bar;
      c.mode = Mode::tightened;
      const auto rfrti = simulate_closed_loop(c, problem, x0, sim);
      c.mode = Mode::input_only;
      const auto rti = simulate_closed_loop(c, problem, x0, sim);

      BenchRow row;
      row.seed = seed;
      row.m_bar = m_bar;
      row.j_exact = exact.j_infinity;
      row.j_rfrti = rfrti.j_infinity;
      row.j_rti = rti.j_infinity;
      row.gap_rfrti = performance_gap(rfrti.j_infinity, exact.j_infinity);
      row.gap_rfrti_vs_rti = performance_gap(rfrti.j_infinity, rti.j_infinity);
      if (opts.record_timing && rfrti.total_inner_iterations > 0) {
        row.seconds_per_iteration = rfrti.wall_seconds / static_cast<double>(rfrti.total_inner_iterations);
      }
      row.rfrti_feasible = rfrti.all_feasible();
      row.rti_feasible = rti.all_feasible();
      row.converged = exact.converged && rfrti.converged && rti.converged;
      if (opts.on_row) opts.on_row(row);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "seed,m_bar,J_exact,J_rfrti,J_rti,gap_rfrti,gap_rfrti_vs_rti,seconds_per_iteration,"
        "rfrti_feasible,rti_feasible,converged\n";
  for (const auto& r : rows) {
    os << r.seed << ',' << r.m_bar << ',' << format_real(r.j_exact) << ',' << format_real(r.j_rfrti) << ','
       << format_real(r.j_rti) << ',' << format_real(r.gap_rfrti) << ',' << format_real(r.gap_rfrti_vs_rti) << ','
       << format_real(r.seconds_per_iteration) << ',' << (r.rfrti_feasible ? 1 : 0) << ','
       << (r.rti_feasible ? 1 : 0) << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

}  // namespace rfmpc
