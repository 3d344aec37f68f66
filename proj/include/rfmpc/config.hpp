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

// Flat `key = value` configuration files. One entry per line, `#` starts a
// comment, lists are comma separated.

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rfmpc/common.hpp"

namespace rfmpc {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string stripped = trim(line);
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(stripped.substr(0, eq));
      const std::string value = trim(stripped.substr(eq + 1));
      if (key.empty()) throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": empty key");
      if (!cfg.values_.emplace(key, value).second) {
        throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' given twice");
      }
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read config '" + path + "'");
    return parse(in);
  }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

  [[nodiscard]] double get_real(const std::string& key, double fallback) const {
    return has(key) ? to_real(key, values_.at(key)) : fallback;
  }

  [[nodiscard]] int get_int(const std::string& key, int fallback) const {
    return has(key) ? to_int(key, values_.at(key)) : fallback;
  }

  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? values_.at(key) : fallback;
  }

  [[nodiscard]] std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    std::stringstream ss(values_.at(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    return out;
  }

  /// Throws if a key outside `known` is present.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
      if (!known.count(key)) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      throw Error(ErrorCode::InvalidArgument, "config key '" + key + "': '" + v + "' is not a number");
    }
    return out;
  }

  static int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      throw Error(ErrorCode::InvalidArgument, "config key '" + key + "': '" + v + "' is not an integer");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace rfmpc
