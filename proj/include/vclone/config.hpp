// Copyright (c) 2026 The vclone Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Strict JSON mapping helpers. Every config object rejects keys it does not
// know, so a typo in a config file fails loudly instead of being ignored.

#ifndef VCLONE_CONFIG_HPP_
#define VCLONE_CONFIG_HPP_

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "vclone/dsp.hpp"
#include "vclone/nn.hpp"

namespace vclone {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads fields out of one JSON object and, on finish(), rejects leftovers.
class StrictReader {
 public:
  StrictReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename V>
  StrictReader& get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<V>();
    } catch (const Json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  /// Nested object handled by `fn(const Json&, const std::string& where)`.
  template <typename F>
  StrictReader& nested(const char* key, F fn) {
    seen_.insert(key);
    if (j_.contains(key)) fn(j_.at(key), where_ + "." + key);
    return *this;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
      }
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Json to_json(const MelConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"n_fft", c.n_fft},
          {"win_length", c.win_length},   {"hop_length", c.hop_length},
          {"n_mels", c.n_mels},           {"fmin", c.fmin},
          {"fmax", c.fmax},               {"floor", c.floor}};
}

inline void read_json(const Json& j, const std::string& where, MelConfig& c) {
  StrictReader(j, where)
      .get("sample_rate", c.sample_rate)
      .get("n_fft", c.n_fft)
      .get("win_length", c.win_length)
      .get("hop_length", c.hop_length)
      .get("n_mels", c.n_mels)
      .get("fmin", c.fmin)
      .get("fmax", c.fmax)
      .get("floor", c.floor)
      .finish();
  if (c.win_length > c.n_fft || c.hop_length == 0 || c.n_mels < 2) {
    throw ConfigError(where + ": inconsistent analysis parameters");
  }
}

inline Json to_json(const FeatureNorm& n) {
  return {{"offset", n.offset}, {"scale", n.scale}};
}

inline void read_json(const Json& j, const std::string& where, FeatureNorm& n) {
  StrictReader(j, where).get("offset", n.offset).get("scale", n.scale).finish();
  if (!(n.scale > 0)) throw ConfigError(where + ".scale must be positive");
}

inline Json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

}  // namespace vclone

#endif  // VCLONE_CONFIG_HPP_
