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

#ifndef VCLONE_NN_HPP_
#define VCLONE_NN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vclone/serialize.hpp"
#include "vclone/tape.hpp"
#include "vclone/tensor.hpp"

namespace vclone {

using Rng = std::mt19937_64;

/// Uniform sample in [-bound, bound). Uses the raw 53-bit mantissa draw so the
/// stream is identical across standard libraries.
inline double uniform_pm(Rng& rng, double bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * bound;
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Ordered, named collection of trainable tensors.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> create(const std::string& name, Shape shape, double bound, Rng& rng) {
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(uniform_pm(rng, bound));
    return add(name, Tensor<T>(std::move(shape), std::move(v), true));
  }

  Tensor<T> zeros(const std::string& name, Shape shape) {
    return add(name, Tensor<T>(std::move(shape), true));
  }

  Tensor<T> add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, t);
    return t;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return items_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& items() const {
    return items_;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  bool all_finite() const {
    for (const auto& [_, t] : items_) {
      for (T v : t.data()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  void save(TensorArchive& ar, const std::string& prefix) const {
    for (const auto& [name, t] : items_) ar.put(prefix + name, t);
  }

  /// Copies stored values into the existing tensors, keeping every handle
  /// valid. Shapes may differ (the speaker table grows on registration).
  void load(const TensorArchive& ar, const std::string& prefix) {
    for (auto& [name, t] : items_) {
      Tensor<T> src = ar.get<T>(prefix + name);
      t.reset(src.shape(), src.values());
    }
  }

  /// Deep copy of all values, keyed by name.
  std::map<std::string, std::vector<T>> snapshot() const {
    std::map<std::string, std::vector<T>> out;
    for (const auto& [name, t] : items_) out[name] = t.values();
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& ps, const std::string& name, std::size_t in,
         std::size_t out, Rng& rng)
      : in_(in), out_(out) {
    weight_ = ps.create(name + ".weight", {in, out}, std::sqrt(3.0 / in), rng);
    bias_ = ps.zeros(name + ".bias", {out});
  }

  /// x [..., in] -> [..., out]
  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    Shape s = x.shape();
    detail::require(!s.empty() && s.back() == in_,
                    "linear: input " + shape_str(s) + " expects last dim " +
                        std::to_string(in_));
    const std::size_t rows = x.size() / in_;
    Tensor<T> flat = x.rank() == 2 ? x : tape.reshape(x, {rows, in_});
    Tensor<T> y = tape.add_bias(tape.matmul(flat, weight_), bias_);
    if (x.rank() == 2) return y;
    s.back() = out_;
    return tape.reshape(y, s);
  }

  Tensor<T> weight() const { return weight_; }
  Tensor<T> bias() const { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor<T> weight_, bias_;
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterSet<T>& ps, const std::string& name, std::size_t in,
         std::size_t out, std::size_t kernel, Rng& rng) {
    weight_ = ps.create(name + ".weight", {kernel, in, out},
                        std::sqrt(6.0 / (kernel * in)), rng);
    bias_ = ps.zeros(name + ".bias", {out});
  }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return tape.conv1d(x, weight_, bias_);
  }

 private:
  Tensor<T> weight_, bias_;
};

template <typename T>
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterSet<T>& ps, const std::string& name, std::size_t in,
       std::size_t hidden, Rng& rng)
      : hidden_(hidden) {
    const double bound = std::sqrt(1.0 / hidden);
    w_ih_ = ps.create(name + ".w_ih", {in, 4 * hidden}, bound, rng);
    w_hh_ = ps.create(name + ".w_hh", {hidden, 4 * hidden}, bound, rng);
    bias_ = ps.zeros(name + ".bias", {4 * hidden});
  }

  std::size_t hidden() const { return hidden_; }

  Tensor<T> sequence(Tape<T>& tape, const Tensor<T>& x,
                     const std::vector<std::size_t>& lengths, bool reverse) const {
    return tape.lstm_sequence(x, w_ih_, w_hh_, bias_, lengths, reverse);
  }

  LstmStep<T> step(Tape<T>& tape, const Tensor<T>& x, const LstmStep<T>& state) const {
    return tape.lstm_cell(x, state.h, state.c, w_ih_, w_hh_, bias_);
  }

  LstmStep<T> zero_state(std::size_t batch) const {
    return {Tensor<T>({batch, hidden_}), Tensor<T>({batch, hidden_})};
  }

 private:
  std::size_t hidden_ = 0;
  Tensor<T> w_ih_, w_hh_, bias_;
};

/// Two independent directions, outputs concatenated: [B, T, 2H].
template <typename T>
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(ParameterSet<T>& ps, const std::string& name, std::size_t in,
         std::size_t hidden, Rng& rng)
      : fwd_(ps, name + ".fwd", in, hidden, rng),
        bwd_(ps, name + ".bwd", in, hidden, rng) {}

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x,
                       const std::vector<std::size_t>& lengths = {}) const {
    return tape.concat({fwd_.sequence(tape, x, lengths, false),
                        bwd_.sequence(tape, x, lengths, true)},
                       2);
  }

 private:
  Lstm<T> fwd_, bwd_;
};

/// Rows named by an ordered list of string ids (speakers).
template <typename T>
class SpeakerTable {
 public:
  SpeakerTable() = default;
  SpeakerTable(ParameterSet<T>& ps, const std::string& name,
               std::vector<std::string> ids, std::size_t dim, Rng& rng)
      : ids_(std::move(ids)), dim_(dim) {
    if (ids_.empty()) throw std::invalid_argument("speaker table needs >= 1 speaker");
    table_ = ps.create(name, {ids_.size(), dim}, std::sqrt(1.0 / dim), rng);
  }

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  Tensor<T> table() const { return table_; }

  bool contains(const std::string& id) const {
    return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
  }

  int index(const std::string& id) const {
    auto it = std::find(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) throw std::out_of_range("unknown speaker '" + id + "'");
    return static_cast<int>(it - ids_.begin());
  }

  std::vector<T> row(std::size_t i) const {
    auto d = table_.data();
    return std::vector<T>(d.begin() + i * dim_, d.begin() + (i + 1) * dim_);
  }

  /// Appends a row initialized to the columnwise mean of the existing rows.
  int register_speaker(const std::string& id) {
    if (contains(id)) throw std::invalid_argument("speaker '" + id + "' already registered");
    std::vector<T> values = table_.values();
    std::vector<T> mean(dim_, T(0));
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      for (std::size_t j = 0; j < dim_; ++j) mean[j] += values[r * dim_ + j];
    }
    for (auto& m : mean) m /= static_cast<T>(ids_.size());
    values.insert(values.end(), mean.begin(), mean.end());
    ids_.push_back(id);
    table_.reset({ids_.size(), dim_}, std::move(values));
    return static_cast<int>(ids_.size()) - 1;
  }

  /// Restores ids and rows from a checkpoint.
  void restore(std::vector<std::string> ids, const Tensor<T>& rows) {
    ids_ = std::move(ids);
    table_.reset(rows.shape(), rows.values());
  }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  Tensor<T> table_;
};

/// Fixed affine map between natural-log mel values and model space.
struct FeatureNorm {
  double offset = -4.0;
  double scale = 4.0;

  double forward(double v) const { return (v - offset) / scale; }
  double inverse(double v) const { return v * scale + offset; }
};

inline std::string join_lines(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += '\n';
    out += v[i];
  }
  return out;
}

inline std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string cur;
  for (char c : s) {
    if (c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace vclone

#endif  // VCLONE_NN_HPP_
