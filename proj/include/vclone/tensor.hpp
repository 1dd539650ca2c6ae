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

#ifndef VCLONE_TENSOR_HPP_
#define VCLONE_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vclone {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Thrown for operand shape mismatches; the message carries both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor handle.
///
/// A Tensor is a reference to shared storage: copying the handle aliases the
/// same buffers, which is how parameters are shared between a model, the
/// tape that records operations on them and the optimizer that updates them.
/// Use clone() for an independent deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    s_->value.assign(numel(shape), T(0));
    s_->shape = std::move(shape);
    s_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    if (numel(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_str(shape) + " holds " +
                       std::to_string(numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    s_->shape = std::move(shape);
    s_->value = std::move(values);
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.s_->value.begin(), t.s_->value.end(), v);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t size() const { return s_->value.size(); }

  std::span<T> data() { return s_->value; }
  std::span<const T> data() const { return s_->value; }
  std::vector<T>& values() { return s_->value; }
  const std::vector<T>& values() const { return s_->value; }

  T item() const {
    if (size() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return s_->value[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  bool has_grad() const { return !s_->grad.empty(); }

  /// Gradient buffer; allocated (zero-filled) on first access. Const on the
  /// handle, not the storage, so backward closures can accumulate into it.
  std::span<T> grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T(0));
    return s_->grad;
  }

  void zero_grad() { s_->grad.clear(); }

  /// Replaces shape and values in place (all handles observe the change);
  /// the gradient buffer is dropped.
  void reset(Shape shape, std::vector<T> values) {
    if (numel(shape) != values.size()) {
      throw ShapeError("reset: shape " + shape_str(shape) + " vs " +
                       std::to_string(values.size()) + " values");
    }
    s_->shape = std::move(shape);
    s_->value = std::move(values);
    s_->grad.clear();
  }

  Tensor clone() const {
    Tensor t(s_->shape, s_->value, s_->requires_grad);
    return t;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

template <typename T>
std::vector<T> to_vector(const Tensor<T>& t) {
  return t.values();
}

}  // namespace vclone

#endif  // VCLONE_TENSOR_HPP_
