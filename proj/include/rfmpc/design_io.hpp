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

// JSON design files: problem data, contraction design and tightened margins.
// Reals are written with round-trip precision, so load(save(d)) == d bitwise.

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "rfmpc/contraction.hpp"
#include "rfmpc/model.hpp"

namespace rfmpc {

struct DesignFile {
  MpcProblem problem;
  ContractionDesign design;
  TightenedMargins margins;
};

namespace detail {

using json = nlohmann::json;

inline json to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(rows)}};
}

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json to_json(const Trajectory& t) {
  json out = json::array();
  for (const auto& v : t) out.push_back(to_json(v));
  return out;
}

inline Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows) {
    throw Error(ErrorCode::Io, "matrix row count mismatch");
  }
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = data.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::Io, "matrix column count mismatch");
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) M(i, j2) = row.at(static_cast<std::size_t>(j2)).get<double>();
  }
  return M;
}

inline Vector vector_from(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::Io, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline Trajectory trajectory_from(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::Io, "expected an array");
  Trajectory t;
  t.reserve(j.size());
  for (const auto& v : j) t.push_back(vector_from(v));
  return t;
}

}  // namespace detail

inline nlohmann::json design_to_json(const DesignFile& f) {
  using detail::to_json;
  const auto& p = f.problem;
  const auto& d = f.design;
  nlohmann::json j;
  j["format"] = "rfmpc-design";
  j["version"] = 1;
  j["problem"] = {{"A", to_json(p.system.A)}, {"B", to_json(p.system.B)},
                  {"X", {{"G", to_json(p.X.G)}, {"g", to_json(p.X.g)}}},
                  {"U", {{"G", to_json(p.U.G)}, {"g", to_json(p.U.g)}}},
                  {"Q", to_json(p.Q)}, {"R", to_json(p.R)}, {"P", to_json(p.P)}, {"N", p.N}};
  j["design"] = {{"K", to_json(d.K)}, {"beta", d.beta}, {"Z", to_json(d.Z)}, {"r", d.r},
                 {"alpha", d.alpha}, {"sigma", d.sigma}, {"N", d.N}};
  j["design"]["kappa_hat"] = d.kappa_hat ? nlohmann::json(*d.kappa_hat) : nlohmann::json(nullptr);
  j["margins"] = {{"c_hat", to_json(f.margins.c_hat)}, {"d_hat", to_json(f.margins.d_hat)}};
  return j;
}

inline DesignFile design_from_json(const nlohmann::json& j) {
  using namespace detail;
  try {
    if (j.value("format", std::string{}) != "rfmpc-design") throw Error(ErrorCode::Io, "not an rfmpc design file");
    DesignFile f;
    const auto& p = j.at("problem");
    f.problem.system = {matrix_from(p.at("A")), matrix_from(p.at("B"))};
    f.problem.X = {matrix_from(p.at("X").at("G")), vector_from(p.at("X").at("g"))};
    f.problem.U = {matrix_from(p.at("U").at("G")), vector_from(p.at("U").at("g"))};
    f.problem.Q = matrix_from(p.at("Q"));
    f.problem.R = matrix_from(p.at("R"));
    f.problem.P = matrix_from(p.at("P"));
    f.problem.N = p.at("N").get<int>();
    const auto& d = j.at("design");
    f.design.K = matrix_from(d.at("K"));
    f.design.beta = d.at("beta").get<double>();
    f.design.Z = matrix_from(d.at("Z"));
    f.design.r = d.at("r").get<double>();
    f.design.alpha = d.at("alpha").get<double>();
    f.design.sigma = d.at("sigma").get<double>();
    f.design.N = d.at("N").get<int>();
    if (d.contains("kappa_hat") && !d.at("kappa_hat").is_null()) f.design.kappa_hat = d.at("kappa_hat").get<double>();
    f.margins.c_hat = trajectory_from(j.at("margins").at("c_hat"));
    f.margins.d_hat = trajectory_from(j.at("margins").at("d_hat"));
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("malformed design file: ") + e.what());
  }
}

inline void save_design(const std::string& path, const DesignFile& f) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + path);
  os << design_to_json(f).dump(1) << '\n';
  if (!os) throw Error(ErrorCode::Io, "write failed: " + path);
}

inline DesignFile load_design(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Io, "cannot read " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, "malformed design file: " + std::string(e.what()));
  }
  return design_from_json(j);
}

}  // namespace rfmpc
