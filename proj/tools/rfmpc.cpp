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

// rfmpc command-line tool.
//
//   rfmpc synth  --config chain.cfg --out design.json
//   rfmpc run    --config chain.cfg --design design.json --mode tightened --mbar 10 --out trace.csv
//   rfmpc bench  --config chain.cfg --out bench.csv
//   rfmpc verify --design design.json --seed 1
//
// Exit codes: 0 success, 1 usage error, 2 validation failure, 3 requested
// radius too large, 4 closed loop lost feasibility.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rfmpc/bench.hpp"
#include "rfmpc/chain.hpp"
#include "rfmpc/design_io.hpp"
#include "rfmpc/simulation.hpp"
#include "rfmpc/verify.hpp"

namespace {

using namespace rfmpc;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kValidation = 2;
constexpr int kRadius = 3;
constexpr int kInfeasible = 4;

BenchConfig load_config(const std::string& path) {
  return path.empty() ? BenchConfig{} : BenchConfig::load(path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  return os;
}

int cmd_synth(const std::string& config_path, const std::string& out_path) {
  const auto cfg = load_config(config_path);
  auto chain = make_chain_problem(cfg);
  auto& problem = chain.problem;
  const auto& K = chain.riccati.K;

  const auto violations = validate_problem(problem);
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << "invalid problem: " << v << '\n';
    return kValidation;
  }

  DesignFile f{problem, {}, {}};
  try {
    f.design = synthesize_design(problem, K, cfg.design_options());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RadiusTooLarge) throw;
    std::cerr << e.what() << '\n';
    const double beta = select_beta(problem.system, K, cfg.beta);
    const double alpha = cfg.alpha.value_or(std::pow(beta, problem.N));
    const double r_max = max_inner_radius(problem.system, K, beta, alpha, problem.X, problem.U);
    std::cerr << "largest admissible r: " << format_real(r_max) << '\n';
    return kRadius;
  }
  f.margins = tighten_margins(f.design, problem);

  const auto check = check_design(f.design, problem.system, problem.X, problem.U);
  if (!check.ok()) {
    for (const auto& v : check.violations) std::cerr << "design check failed: " << v << '\n';
    return kValidation;
  }

  std::cout << "rho(A+BK)  " << format_real(closed_loop_radius(problem.system, K)) << '\n'
            << "beta       " << format_real(f.design.beta) << '\n'
            << "r          " << format_real(f.design.r) << '\n'
            << "alpha      " << format_real(f.design.alpha) << '\n'
            << "sigma      " << format_real(f.design.sigma) << '\n'
            << "trace(Z)   " << format_real(f.design.Z.trace()) << '\n'
            << "min c_hat  " << format_real(f.margins.c_hat.back().minCoeff()) << '\n'
            << "min d_hat  " << format_real(f.margins.d_hat.back().minCoeff()) << '\n'
            << "variables  " << monolithic_variables(problem.system, problem.N) << '\n';
  save_design(out_path, f);
  std::cout << "wrote " << out_path << '\n';
  return kOk;
}

int cmd_run(const std::string& config_path, const std::string& design_path, const std::string& mode_name,
            int m_bar, bool exact, int seed, const std::string& out_path) {
  const auto cfg = load_config(config_path);
  DesignFile f;
  if (design_path.empty()) {
    auto chain = make_chain_problem(cfg);
    f.design = synthesize_design(chain.problem, chain.riccati.K, cfg.design_options());
    f.margins = tighten_margins(f.design, chain.problem);
    f.problem = std::move(chain.problem);
  } else {
    f = load_design(design_path);
  }
  const auto& problem = f.problem;
  const Vector x0 = bench_initial_state(cfg, problem.nx(), seed);
  const auto x0_expected = build_chain(cfg).system.nx();
  if (x0_expected != problem.nx()) {
    std::cerr << "config describes " << x0_expected << " states but the design has " << problem.nx() << '\n';
    return kValidation;
  }

  ControllerConfig cc;
  cc.mode = parse_mode(mode_name);
  cc.m_bar = m_bar;
  cc.design = f.design;
  cc.qp_tol = cfg.qp_tol;
  cc.workers = cfg.workers;
  SimulationOptions so;
  so.policy = exact ? SimulationOptions::Policy::exact : SimulationOptions::Policy::rti;
  so.t_max = cfg.t_max;
  so.eps_stop = cfg.eps_stop;
  so.reference_tol = cfg.reference_tol;
  so.throw_on_halt = false;
  const auto trace = simulate_closed_loop(cc, problem, x0, so);

  if (!out_path.empty()) {
    auto os = open_out(out_path);
    write_trace_csv(os, trace);
  }
  std::cout << "J_inf " << format_real(trace.j_infinity) << " steps " << trace.steps()
            << " converged " << (trace.converged ? "yes" : "no") << " feasible "
            << (trace.all_feasible() && !trace.halted_reason ? "yes" : "no") << '\n';
  if (trace.halted_reason) {
    std::cerr << "halted at step " << trace.halted_step << " (" << to_string(*trace.halted_reason)
              << "): " << trace.halt_message << '\n';
    return kInfeasible;
  }
  if (!trace.all_feasible()) {
    for (std::size_t t = 0; t < trace.feasible_x.size(); ++t) {
      const bool ok = trace.feasible_x[t] && (t >= trace.feasible_u.size() || trace.feasible_u[t]);
      if (!ok) {
        std::cerr << "constraint violated at step " << t << '\n';
        break;
      }
    }
    return kInfeasible;
  }
  return kOk;
}

int cmd_bench(const std::string& config_path, const std::string& out_path, bool timing,
              std::optional<int> workers) {
  auto cfg = load_config(config_path);
  if (workers) cfg.workers = *workers;
  cfg.validate();
  const auto setup = make_bench_setup(cfg);
  BenchOptions opts;
  opts.record_timing = timing;
  opts.on_row = [](const BenchRow& r) {
    std::cerr << "seed " << r.seed << " m_bar " << r.m_bar << " gap_rfrti " << format_real(r.gap_rfrti)
              << " gap_rfrti_vs_rti " << format_real(r.gap_rfrti_vs_rti) << '\n';
  };
  const auto rows = run_bench(cfg, setup, opts);
  if (out_path.empty()) {
    write_bench_csv(std::cout, rows);
  } else {
    auto os = open_out(out_path);
    write_bench_csv(os, rows);
  }
  for (const auto& r : rows) {
    if (!r.rfrti_feasible) return kInfeasible;
  }
  return kOk;
}

int cmd_verify(const std::string& design_path, std::uint64_t seed, int samples) {
  const auto f = load_design(design_path);
  VerifyOptions opts;
  opts.seed = seed;
  opts.terminal_samples = samples;
  opts.shift_trials = samples;
  const auto report = verify_design(f, opts);
  for (const auto& c : report.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) std::cout << ": " << c.detail;
    std::cout << '\n';
  }
  return report.ok() ? kOk : kValidation;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::RadiusTooLarge: return kRadius;
    case ErrorCode::StageInfeasible:
    case ErrorCode::Infeasible: return kInfeasible;
    default: return kValidation;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-time parallel MPC with recursive feasibility guarantees"};
  app.require_subcommand(1);

  std::string config, design, out, mode = "tightened";
  int m_bar = 10;
  int seed = 0;
  int samples = 200;
  bool exact = false;
  bool no_timing = false;
  std::optional<int> workers;

  auto* synth = app.add_subcommand("synth", "synthesize the contraction design and tightened margins");
  synth->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "design file to write")->required();

  auto* run = app.add_subcommand("run", "simulate one closed loop and write its trace");
  run->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
  run->add_option("--design", design, "design file (synthesized from the config if omitted)")
      ->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "constraint handling")
      ->check(CLI::IsMember({"input_only", "tightened", "nominal"}));
  run->add_option("--mbar", m_bar, "inner iterations per step")->check(CLI::PositiveNumber);
  run->add_flag("--exact", exact, "apply the converged solution instead of m_bar iterations");
  run->add_option("--seed", seed, "initial-state seed (0: x0_scale * 1)");
  run->add_option("--out", out, "trace CSV");

  auto* bench = app.add_subcommand("bench", "m_bar sweep: exact MPC vs RFRTI vs heuristic RTI");
  bench->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
  bench->add_option("--out", out, "bench CSV (stdout if omitted)");
  bench->add_flag("--no-timing", no_timing, "write zero wall times for reproducible output");
  bench->add_option("--workers", workers, "stage-solve worker threads")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "run the invariant suite against a design file");
  verify->add_option("--design", design, "design file")->required()->check(CLI::ExistingFile);
  verify->add_option("--seed", seed, "sampling seed");
  verify->add_option("--samples", samples, "terminal samples and shift trials")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(config, out);
    if (*run) return cmd_run(config, design, mode, m_bar, exact, seed, out);
    if (*bench) return cmd_bench(config, out, !no_timing, workers);
    if (*verify) return cmd_verify(design, static_cast<std::uint64_t>(seed), samples);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kUsage;
}
