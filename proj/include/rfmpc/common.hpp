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

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sequence of per-stage vectors (states x_0..x_N, inputs u_0..u_{N-1}, ...).
using Trajectory = std::vector<Vector>;

enum class ErrorCode {
  InvalidArgument,
  NotStabilizable,
  NotContractive,
  InvalidBeta,
  RadiusTooLarge,
  EmptyMargin,
  Infeasible,
  MaxIterations,
  StageInfeasible,
  NotContracting,
  NoConvergence,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotStabilizable: return "NotStabilizable";
    case ErrorCode::NotContractive: return "NotContractive";
    case ErrorCode::InvalidBeta: return "InvalidBeta";
    case ErrorCode::RadiusTooLarge: return "RadiusTooLarge";
    case ErrorCode::EmptyMargin: return "EmptyMargin";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::StageInfeasible: return "StageInfeasible";
    case ErrorCode::NotContracting: return "NotContracting";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. The message is prefixed with
/// the code name so that command-line reports can be grepped.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the controller when a decoupled stage problem has no feasible
/// point. `stage` is the horizon index, `step` the closed-loop time (or -1).
class StageInfeasibleError : public Error {
 public:
  StageInfeasibleError(int stage, int step, const std::string& what)
      : Error(ErrorCode::StageInfeasible, what), stage_(stage), step_(step) {}

  [[nodiscard]] int stage() const noexcept { return stage_; }
  [[nodiscard]] int step() const noexcept { return step_; }

 private:
  int stage_;
  int step_;
};

namespace detail {

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorCode::InvalidArgument, what);
}

inline bool is_symmetric(const Matrix& M, double tol = 1e-10) {
  if (M.rows() != M.cols()) return false;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline double min_eigenvalue(const Matrix& M) {
  const Matrix S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Matrix& M) {
  const Matrix S = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline bool is_positive_definite(const Matrix& M, double tol = 0.0) {
  return is_symmetric(M) && min_eigenvalue(M) > tol;
}

}  // namespace detail

}  // namespace rfmpc
