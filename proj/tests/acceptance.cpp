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

// Acceptance checks. Prints one PASS/FAIL line per criterion. With no
// arguments every criterion runs; otherwise only the listed numbers.
// Exit status is nonzero if any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rfmpc/bench.hpp"
#include "rfmpc/consensus.hpp"
#include "rfmpc/stage_qp.hpp"
#include "rfmpc/verify.hpp"
#include "test_util.hpp"

namespace rfmpc {
namespace {

// Tolerances.
constexpr long kVariables = 18120;
constexpr double kSlackTol = 1e-9;
constexpr double kRadiusTol = 1e-9;
constexpr double kInclusionFactor = 1.0 + 1e-6;
constexpr double kMinRSquared = 0.99;
constexpr double kKappaSafety = 1.1;
constexpr int kDiscard = 5;
constexpr int kInnerIterations = 60;
constexpr int kClosedLoopSteps = 200;
constexpr double kMonotoneTol = 1e-8;
constexpr double kGapAt50 = 1e-4;
constexpr double kFullScaleGap = 5e-3;
constexpr double kRtiGap = 1e-3;
constexpr double kQpTol = 1e-8;
constexpr double kConsensusTol = 1e-9;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Shared reduced-chain data, built on first use.
const BenchSetup& reduced_setup() {
  static const BenchSetup s = make_bench_setup(BenchConfig::reduced());
  return s;
}

const std::vector<BenchRow>& reduced_sweep(std::size_t workers) {
  static std::vector<BenchRow> rows1, rows8;
  auto& rows = workers == 1 ? rows1 : rows8;
  if (rows.empty()) {
    BenchConfig cfg = BenchConfig::reduced();
    cfg.workers = static_cast<int>(workers);
    BenchOptions opts;
    opts.record_timing = false;
    rows = run_bench(cfg, reduced_setup(), opts);
  }
  return rows;
}

std::string csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  write_bench_csv(os, rows);
  return os.str();
}

Outcome criterion1() {
  const BenchConfig cfg;
  const auto chain = build_chain(cfg);
  const long n = monolithic_variables(chain.system, cfg.N);
  return {n == kVariables, std::to_string(n) + " variables (n_x=" + std::to_string(chain.system.nx()) +
                               ", n_u=" + std::to_string(chain.system.nu()) + ", N=" + std::to_string(cfg.N) + ")"};
}

struct SlackTally {
  int designs = 0;
  int failures = 0;
  double worst_contraction = INFINITY;
  double worst_rows = INFINITY;
  double worst_radius = INFINITY;

  void add(const ContractionDesign& d, const MpcProblem& p) {
    ++designs;
    const auto chk = check_design(d, p.system, p.X, p.U, kSlackTol);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(d.Z);
    const double lmin = eig.eigenvalues().minCoeff();
    const double contraction = chk.contraction_slack / eig.eigenvalues().maxCoeff();
    const double rows = std::min(chk.state_row_slack, chk.input_row_slack);
    const double radius = lmin / (d.r * d.r) - 1.0;
    worst_contraction = std::min(worst_contraction, contraction);
    worst_rows = std::min(worst_rows, rows);
    worst_radius = std::min(worst_radius, radius);
    const bool ok = chk.ok() && contraction >= -kSlackTol && rows >= -kSlackTol && lmin >= d.r * d.r * (1.0 - kRadiusTol);
    if (!ok) ++failures;
  }
};

Outcome criterion2() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit;
  SlackTally tally;
  int errors = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto nx = 1 + static_cast<Eigen::Index>(rng() % 6);
    const auto nu = 1 + static_cast<Eigen::Index>(rng() % 3);
    const int N = 5 + static_cast<int>(rng() % 16);
    const auto sys = testing::random_system(rng, nx, nu);
    const Matrix Q = testing::random_spd(rng, nx);
    const Matrix R = testing::random_spd(rng, nu);
    try {
      const auto ric = dare_solve(sys.A, sys.B, Q, R);
      Vector xb(nx), ub(nu);
      for (Eigen::Index i = 0; i < nx; ++i) xb(i) = 0.5 + 2.0 * unit(rng);
      for (Eigen::Index i = 0; i < nu; ++i) ub(i) = 0.5 + 2.0 * unit(rng);
      const MpcProblem p{sys, PolyhedralSet::box(xb), PolyhedralSet::box(ub), Q, R, ric.P, N};
      tally.add(synthesize_design(p, ric.K), p);
    } catch (const Error&) {
      ++errors;
    }
  }
  for (int n = 1; n <= 5; ++n) {
    BenchConfig cfg = BenchConfig::reduced();
    cfg.n_carts = n;
    const auto s = make_bench_setup(cfg);
    tally.add(s.design, s.problem);
  }
  const bool ok = tally.failures == 0 && errors == 0 && tally.designs == 105;
  return {ok, std::to_string(tally.designs) + " designs, " + std::to_string(tally.failures) + " failing, " +
                  std::to_string(errors) + " synthesis errors; worst relative slack: contraction " +
                  num(tally.worst_contraction) + ", rows " + num(tally.worst_rows) + ", radius " +
                  num(tally.worst_radius)};
}

Outcome criterion3() {
  const auto& s = reduced_setup();
  const auto margins = tighten_margins(s.design, s.problem);
  std::mt19937_64 rng(3);
  int admissible = 0, inclusion = 0, sampled = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto cert = sample_admissible_certificate(rng, s.problem, s.design, margins);
    if (!cert) continue;
    ++sampled;
    const auto t = run_shift_trial(rng, s.problem, s.design, margins, *cert, kInclusionFactor);
    admissible += t.admissible ? 1 : 0;
    inclusion += t.inclusion ? 1 : 0;
    worst = std::max(worst, t.worst_ratio);
  }
  const bool ok = sampled == 1000 && admissible == 1000 && inclusion == 1000;
  return {ok, std::to_string(sampled) + " certificates, " + std::to_string(admissible) + " shifted admissible, " +
                  std::to_string(inclusion) + " inclusion; worst ratio " + num(worst)};
}

struct ConvergenceData {
  KappaFit fit;
  std::vector<double> deltas;
  int bound_violations = 0;
  double worst_bound_ratio = 0.0;
};

const ConvergenceData& convergence_data() {
  static std::optional<ConvergenceData> cache;
  if (cache) return *cache;
  const auto& s = reduced_setup();
  const auto& p = s.problem;
  const Vector x0 = BenchConfig::reduced().x0(p.nx());
  const auto ref = solve_reference(x0, p, Mode::tightened, s.design, 1e-12);

  ControllerConfig cfg;
  cfg.design = s.design;
  RtiController ctl(p, cfg);
  auto it = IterateTriple::zeros(p.N, p.nx(), p.nu());
  const double delta0 = ctl.phi()(it - ref.triple);

  ConvergenceData out;
  std::vector<double> applied;
  for (int m = 1; m <= kInnerIterations; ++m) {
    ctl.iterate(it, x0);
    out.deltas.push_back(ctl.phi()(it - ref.triple));
    const Vector x_plus = p.system.A * x0 + p.system.B * ctl.stage_inputs()[0];
    applied.push_back((x_plus - ref.triple.z[1]).norm());
  }
  out.fit = estimate_kappa(std::span<const double>(out.deltas).subspan(kDiscard));
  const double kappa = kKappaSafety * out.fit.kappa;
  for (int m = 1; m <= kInnerIterations; ++m) {
    const double bound = s.design.sigma * (1.0 + kappa) * std::pow(kappa, m + 1) * delta0;
    const double e = applied[static_cast<std::size_t>(m - 1)];
    out.worst_bound_ratio = std::max(out.worst_bound_ratio, e / bound);
    if (e > bound) ++out.bound_violations;
  }
  cache = out;
  return *cache;
}

Outcome criterion4() {
  try {
    const auto& c = convergence_data();
    const double k11 = kKappaSafety * c.fit.kappa;
    const bool ok = c.fit.kappa < 1.0 && c.fit.r_squared >= kMinRSquared && c.bound_violations == 0;
    return {ok, "kappa_hat " + num(c.fit.kappa) + ", R^2 " + num(c.fit.r_squared) + " (need >= " +
                    num(kMinRSquared) + "), Delta " + num(c.deltas.front()) + " -> " + num(c.deltas.back()) +
                    ", bound violations " + std::to_string(c.bound_violations) + ", worst error/bound " +
                    num(c.worst_bound_ratio) + (k11 >= 1.0 ? " (1.1*kappa_hat >= 1, bound not contractive)" : "")};
  } catch (const Error& e) {
    return {false, e.what()};
  }
}

Outcome criterion5() {
  const auto& s = reduced_setup();
  double kappa = 0.0;
  try {
    kappa = convergence_data().fit.kappa;
  } catch (const Error& e) {
    return {false, std::string("no kappa estimate: ") + e.what()};
  }
  ControllerConfig cfg;
  cfg.design = s.design;
  SimulationOptions opts;
  opts.adaptive_kappa = kappa;
  opts.t_max = kClosedLoopSteps;
  opts.eps_stop = 0.0;
  opts.throw_on_halt = false;
  const auto tr = simulate_closed_loop(cfg, s.problem, BenchConfig::reduced().x0(s.problem.nx()), opts);
  int violations = 0;
  for (bool f : tr.feasible_x) violations += f ? 0 : 1;
  for (bool f : tr.feasible_u) violations += f ? 0 : 1;
  int m_min = 1 << 30, m_max = 0;
  for (int m : tr.m_bar_used) {
    m_min = std::min(m_min, m);
    m_max = std::max(m_max, m);
  }
  const bool ok = !tr.halted_reason && tr.steps() == kClosedLoopSteps && violations == 0;
  std::string detail = std::to_string(tr.steps()) + " steps, " + std::to_string(violations) + " violations, m_bar " +
                       std::to_string(m_min) + ".." + std::to_string(m_max) + " (kappa_hat " + num(kappa) + ")";
  if (tr.halted_reason) detail += ", halted: " + tr.halt_message;
  return {ok, detail};
}

Outcome criterion6() {
  const auto& rows = reduced_sweep(1);
  bool monotone = true;
  std::string gaps;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].gap_rfrti > rows[i - 1].gap_rfrti + kMonotoneTol) monotone = false;
    gaps += (i ? " " : "") + std::to_string(rows[i].m_bar) + ":" + num(rows[i].gap_rfrti);
  }
  const double gap50 = rows.back().m_bar == 50 ? rows.back().gap_rfrti : INFINITY;
  bool feasible = true;
  for (const auto& r : rows) feasible = feasible && r.rfrti_feasible && r.converged;

  const auto full_cfg = BenchConfig::load(RFMPC_SOURCE_DIR "/configs/chain60.cfg");
  const auto full = make_bench_setup(full_cfg);
  const Vector x0 = full_cfg.x0(full.problem.nx());
  ControllerConfig exact_cfg;
  exact_cfg.mode = Mode::nominal;
  exact_cfg.design = full.design;
  SimulationOptions exact_opts;
  exact_opts.policy = SimulationOptions::Policy::exact;
  exact_opts.t_max = full_cfg.t_max;
  const auto exact = simulate_closed_loop(exact_cfg, full.problem, x0, exact_opts);
  ControllerConfig cfg;
  cfg.design = full.design;
  cfg.m_bar = 25;
  SimulationOptions opts;
  opts.t_max = full_cfg.t_max;
  const auto rfrti = simulate_closed_loop(cfg, full.problem, x0, opts);
  const double full_gap = performance_gap(rfrti.j_infinity, exact.j_infinity);
  const bool full_ok = exact.converged && rfrti.converged && rfrti.all_feasible() && full_gap <= kFullScaleGap;

  const bool ok = monotone && feasible && gap50 <= kGapAt50 && full_ok;
  return {ok, "reduced gaps " + gaps + (monotone ? " (monotone)" : " (NOT monotone)") + "; full chain m_bar=25 gap " +
                  num(full_gap) + " over " + std::to_string(rfrti.steps()) + " steps" +
                  (rfrti.all_feasible() ? "" : ", infeasible")};
}

Outcome criterion7() {
  const auto& rows = reduced_sweep(1);
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(r.gap_rfrti_vs_rti));
  return {worst <= kRtiGap, "max |gap_rfrti_vs_rti| " + num(worst) + " over " + std::to_string(rows.size()) + " rows"};
}

Outcome criterion8() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit;
  int qp_fail = 0;
  double qp_worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto nx = 1 + static_cast<Eigen::Index>(rng() % 3);
    const auto nu = 1 + static_cast<Eigen::Index>(rng() % 2);
    const int N = 3;
    const auto sys = testing::random_system(rng, nx, nu);
    const auto X = PolyhedralSet::box(nx, 1.0);
    const auto U = PolyhedralSet::box(nu, 0.5);
    const Matrix Q = testing::random_spd(rng, nx);
    const Matrix R = testing::random_spd(rng, nu);
    TightenedMargins m = TightenedMargins::nominal(X, U, N);
    for (auto& c : m.c_hat) c *= 0.5 + 0.5 * unit(rng);
    for (std::size_t k = 1; k < m.d_hat.size(); ++k) m.d_hat[k] *= 0.5 + 0.5 * unit(rng);
    const MpcProblem p{sys, X, U, Q, R, Matrix::Identity(nx, nx), N};
    const StageProblems stages(p, m);
    const Vector lp = testing::random_vector(rng, nx, 3.0), lk = testing::random_vector(rng, nx, 3.0);
    const Vector z = testing::random_vector(rng, nx), v = testing::random_vector(rng, nu);

    Matrix H, G;
    Vector g, h, y;
    if (trial % 2 == 0) {
      // Initial stage with u = 0 feasible.
      Vector x_hat = testing::random_vector(rng, nx);
      const double reach = (sys.A * x_hat).cwiseAbs().maxCoeff();
      x_hat *= 0.9 * m.c_hat[1].minCoeff() / std::max(reach, 1e-12) * unit(rng);
      y = stages.solve_initial(lk, v, x_hat, 1e-12).u;
      H = 4.0 * R;
      g = -sys.B.transpose() * lk - 2.0 * R * v;
      G.resize(2 * nu + 2 * nx, nu);
      G << U.G, X.G * sys.B;
      h.resize(2 * nu + 2 * nx);
      h << U.g, m.c_hat[1] - X.G * sys.A * x_hat;
    } else {
      const auto res = stages.solve_middle(1, lp, lk, z, v, 1e-12);
      y.resize(nx + nu);
      y << res.x, res.u;
      H = Matrix::Zero(nx + nu, nx + nu);
      H.topLeftCorner(nx, nx) = 4.0 * Q;
      H.bottomRightCorner(nu, nu) = 4.0 * R;
      g.resize(nx + nu);
      g << lp - sys.A.transpose() * lk - 2.0 * Q * z, -sys.B.transpose() * lk - 2.0 * R * v;
      G = Matrix::Zero(2 * nu + 2 * nx, nx + nu);
      G.topRightCorner(2 * nu, nu) = U.G;
      G.bottomLeftCorner(2 * nx, nx) = X.G * sys.A;
      G.bottomRightCorner(2 * nx, nu) = X.G * sys.B;
      h.resize(2 * nu + 2 * nx);
      h << m.d_hat[1], m.c_hat[2];
    }
    const auto o = testing::brute_force_qp(H, g, G, h, 1e-11);
    const double diff = o ? (y - o->primal).cwiseAbs().maxCoeff() : INFINITY;
    qp_worst = std::max(qp_worst, diff);
    if (!(diff <= kQpTol)) ++qp_fail;
  }

  int cons_fail = 0;
  double cons_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto nx = 1 + static_cast<Eigen::Index>(rng() % 4);
    const auto nu = 1 + static_cast<Eigen::Index>(rng() % 3);
    const int N = 1 + static_cast<int>(rng() % 6);
    const auto sys = testing::random_system(rng, nx, nu);
    const Matrix Q = testing::random_spd(rng, nx), R = testing::random_spd(rng, nu), P = testing::random_spd(rng, nx);
    Trajectory x, u, z, v;
    for (int k = 0; k <= N; ++k) {
      x.push_back(testing::random_vector(rng, nx));
      z.push_back(testing::random_vector(rng, nx));
    }
    for (int k = 0; k < N; ++k) {
      u.push_back(testing::random_vector(rng, nu));
      v.push_back(testing::random_vector(rng, nu));
    }
    const Vector x_hat = testing::random_vector(rng, nx);
    const auto s = solve_consensus(x, u, z, v, x_hat, sys, Q, R, P);
    const auto o = testing::consensus_kkt(sys, Q, R, P, x, u, z, v, x_hat);
    const double d = std::max({testing::max_abs_diff(s.z_plus, o.z_plus), testing::max_abs_diff(s.v_plus, o.v_plus),
                               testing::max_abs_diff(s.delta, o.delta)});
    cons_worst = std::max(cons_worst, d);
    if (!(d <= kConsensusTol)) ++cons_fail;
  }
  return {qp_fail == 0 && cons_fail == 0,
          "stage QPs 500, " + std::to_string(qp_fail) + " mismatches (worst " + num(qp_worst) + "); consensus 200, " +
              std::to_string(cons_fail) + " mismatches (worst " + num(cons_worst) + ")"};
}

Outcome criterion9() {
  const std::string a = csv(reduced_sweep(1));
  const std::string b = csv(reduced_sweep(8));
  return {a == b, std::string(a == b ? "identical" : "different") + " CSV (" + std::to_string(a.size()) +
                      " bytes) for workers 1 and 8"};
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace rfmpc

int main(int argc, char** argv) {
  using namespace rfmpc;
  const std::vector<Criterion> all{
      {"chain dimensions", criterion1},      {"contraction suite", criterion2},
      {"certificate shift", criterion3},     {"inner convergence", criterion4},
      {"recursive feasibility", criterion5}, {"performance trend", criterion6},
      {"tightened vs input-only", criterion7}, {"oracle equivalence", criterion8},
      {"determinism", criterion9}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(all.size())) {
      std::cerr << "usage: " << argv[0] << " [criterion numbers 1.." << all.size() << "]\n";
      return 2;
    }
    selected.push_back(n);
  }
  if (selected.empty())
    for (int n = 1; n <= static_cast<int>(all.size()); ++n) selected.push_back(n);

  int failed = 0;
  for (int n : selected) {
    const auto& c = all[static_cast<std::size_t>(n - 1)];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %-24s %s  %s [%.1f s]\n", n, c.title, o.passed ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
