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

// Reverse-mode differentiation over Tensor<T>.
//
// A Tape records every operation whose inputs require gradients, together
// with a closure implementing its backward rule. backward() replays those
// closures in exact reverse order and then clears the tape. Tensors are laid
// out row-major; sequence tensors are [batch, time, channels].

#ifndef VCLONE_TAPE_HPP_
#define VCLONE_TAPE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vclone/tensor.hpp"

namespace vclone {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  if (!m || !n || !k) return;
  MapMat<T>(c, m, n).noalias() += CMapMat<T>(a, m, k) * CMapMat<T>(b, k, n);
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  if (!m || !n || !k) return;
  MapMat<T>(c, m, n).noalias() +=
      CMapMat<T>(a, k, m).transpose() * CMapMat<T>(b, k, n);
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  if (!m || !n || !k) return;
  MapMat<T>(c, m, n).noalias() +=
      CMapMat<T>(a, m, k) * CMapMat<T>(b, n, k).transpose();
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
  // log(1 + e^x) without overflow
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace detail

template <typename T>
struct LstmStep {
  Tensor<T> h;
  Tensor<T> c;
};

template <typename T>
class Tape {
 public:
  enum class Mode { kRecord, kNoGrad };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return entries_.size(); }
  bool recording() const { return mode_ == Mode::kRecord; }

  void clear() {
    entries_.clear();
    consumed_ = false;
  }

  // ---------------------------------------------------------------- backward

  void backward(Tensor<T> loss) {
    if (entries_.empty()) {
      throw std::logic_error(consumed_
                                 ? "backward called twice without a new forward pass"
                                 : "backward on an empty tape");
    }
    if (loss.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
      throw std::logic_error("loss does not depend on any tensor requiring grad");
    }
    loss.grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
    entries_.clear();
    consumed_ = true;
  }

  // ------------------------------------------------------------- elementwise

  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape("add", a, b);
    Tensor<T> out(a.shape(), track(a, b));
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    if (out.requires_grad()) {
      record([a, b, out]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        if (a.requires_grad()) accumulate(a, g);
        if (b.requires_grad()) accumulate(b, g);
      });
    }
    return out;
  }

  Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape("sub", a, b);
    Tensor<T> out(a.shape(), track(a, b));
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
    if (out.requires_grad()) {
      record([a, b, out]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        if (a.requires_grad()) accumulate(a, g);
        if (b.requires_grad()) {
          auto gb = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      });
    }
    return out;
  }

  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape("mul", a, b);
    Tensor<T> out(a.shape(), track(a, b));
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    if (out.requires_grad()) {
      record([a, b, out]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        if (a.requires_grad()) {
          auto ga = a.grad();
          auto y = b.data();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          auto x = a.data();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        }
      });
    }
    return out;
  }

  Tensor<T> scale(const Tensor<T>& a, T factor) {
    Tensor<T> out(a.shape(), track(a));
    auto o = out.data();
    auto x = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
    if (out.requires_grad()) {
      record([a, out, factor]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
      });
    }
    return out;
  }

  /// x[..., n] + bias[n]; the only broadcast the tape supports.
  Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    detail::require(bias.rank() == 1 && x.rank() >= 1 &&
                        x.shape().back() == bias.dim(0),
                    "add_bias: " + shape_str(x.shape()) + " + " +
                        shape_str(bias.shape()));
    const std::size_t n = bias.dim(0);
    Tensor<T> out(x.shape(), track(x, bias));
    auto o = out.data();
    auto xv = x.data();
    auto bv = bias.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + bv[i % n];
    if (out.requires_grad()) {
      record([x, bias, out, n]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        if (x.requires_grad()) accumulate(x, g);
        if (bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
        }
      });
    }
    return out;
  }

  Tensor<T> tanh(const Tensor<T>& x) {
    return unary(x, [](T v) { return std::tanh(v); },
                 [](T, T y) { return T(1) - y * y; });
  }

  Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary(x, [](T v) { return detail::sigmoid(v); },
                 [](T, T y) { return y * (T(1) - y); });
  }

  Tensor<T> relu(const Tensor<T>& x) {
    return unary(x, [](T v) { return v > T(0) ? v : T(0); },
                 [](T v, T) { return v > T(0) ? T(1) : T(0); });
  }

  Tensor<T> softplus(const Tensor<T>& x) {
    return unary(x, [](T v) { return detail::softplus(v); },
                 [](T v, T) { return detail::sigmoid(v); });
  }

  Tensor<T> exp(const Tensor<T>& x) {
    return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
  }

  Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    detail::require(axis < x.rank(), "softmax: axis " + std::to_string(axis) +
                                         " out of range for " +
                                         shape_str(x.shape()));
    auto [outer, len, inner] = split_axis(x.shape(), axis);
    Tensor<T> out(x.shape(), track(x));
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t c = 0; c < inner; ++c) {
        const std::size_t base = a * len * inner + c;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
        T total = 0;
        for (std::size_t j = 0; j < len; ++j) {
          const T e = std::exp(xv[base + j * inner] - mx);
          o[base + j * inner] = e;
          total += e;
        }
        for (std::size_t j = 0; j < len; ++j) o[base + j * inner] /= total;
      }
    }
    if (out.requires_grad()) {
      record([x, out, outer, len, inner]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto y = out.data();
        auto gx = x.grad();
        for (std::size_t a = 0; a < outer; ++a) {
          for (std::size_t c = 0; c < inner; ++c) {
            const std::size_t base = a * len * inner + c;
            T dot = 0;
            for (std::size_t j = 0; j < len; ++j) {
              dot += y[base + j * inner] * g[base + j * inner];
            }
            for (std::size_t j = 0; j < len; ++j) {
              const std::size_t i = base + j * inner;
              gx[i] += y[i] * (g[i] - dot);
            }
          }
        }
      });
    }
    return out;
  }

  // -------------------------------------------------------------- structure

  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                    "matmul: " + shape_str(a.shape()) + " x " +
                        shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n}, track(a, b));
    detail::gemm_nn(m, n, k, a.data().data(), b.data().data(),
                    out.data().data());
    if (out.requires_grad()) {
      record([a, b, out, m, n, k]() mutable {
        if (!out.has_grad()) return;
        const T* g = out.grad().data();
        if (a.requires_grad()) {
          detail::gemm_nt(m, k, n, g, b.data().data(), a.grad().data());
        }
        if (b.requires_grad()) {
          detail::gemm_tn(k, n, m, a.data().data(), g, b.grad().data());
        }
      });
    }
    return out;
  }

  Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    detail::require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) +
                                                  " to " + shape_str(shape));
    Tensor<T> out(std::move(shape), x.values(), track(x));
    if (out.requires_grad()) {
      record([x, out]() mutable {
        if (!out.has_grad()) return;
        accumulate(x, out.grad());
      });
    }
    return out;
  }

  Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    detail::require(!parts.empty(), "concat: no inputs");
    const Shape& ref = parts.front().shape();
    detail::require(axis < ref.size(), "concat: axis out of range for " +
                                           shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    bool rg = false;
    for (const auto& p : parts) {
      bool ok = p.rank() == ref.size();
      for (std::size_t d = 0; ok && d < ref.size(); ++d) {
        if (d != axis && p.dim(d) != ref[d]) ok = false;
      }
      detail::require(ok, "concat: " + shape_str(ref) + " vs " +
                              shape_str(p.shape()) + " on axis " +
                              std::to_string(axis));
      out_shape[axis] += p.dim(axis);
      rg = rg || p.requires_grad();
    }
    auto [outer, total, inner] = split_axis(out_shape, axis);
    Tensor<T> out(out_shape, recording() && rg);
    auto o = out.data();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.dim(axis) * inner;
      auto pv = p.data();
      for (std::size_t a = 0; a < outer; ++a) {
        std::copy_n(pv.begin() + a * len, len,
                    o.begin() + a * total * inner + offset);
      }
      offset += len;
    }
    if (out.requires_grad()) {
      record([parts, out, axis, outer, total, inner]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        std::size_t offset = 0;
        for (auto& p : parts) {
          const std::size_t len = p.dim(axis) * inner;
          if (p.requires_grad()) {
            auto gp = p.grad();
            for (std::size_t a = 0; a < outer; ++a) {
              for (std::size_t i = 0; i < len; ++i) {
                gp[a * len + i] += g[a * total * inner + offset + i];
              }
            }
          }
          offset += len;
        }
      });
    }
    return out;
  }

  /// Stacks equally shaped tensors along a new axis.
  Tensor<T> stack(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    detail::require(!parts.empty(), "stack: no inputs");
    Shape unit = parts.front().shape();
    detail::require(axis <= unit.size(), "stack: axis out of range");
    unit.insert(unit.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    std::vector<Tensor<T>> expanded;
    expanded.reserve(parts.size());
    for (const auto& p : parts) {
      Shape s = p.shape();
      s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
      detail::require(s == unit, "stack: " + shape_str(parts.front().shape()) +
                                     " vs " + shape_str(p.shape()));
      expanded.push_back(reshape(p, s));
    }
    return concat(expanded, axis);
  }

  Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin,
                  std::size_t end) {
    detail::require(axis < x.rank() && begin <= end && end <= x.dim(axis),
                    "slice [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") on axis " +
                        std::to_string(axis) + " of " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    auto [outer, len, inner] = split_axis(x.shape(), axis);
    const std::size_t width = (end - begin) * inner;
    Tensor<T> out(out_shape, track(x));
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t a = 0; a < outer; ++a) {
      std::copy_n(xv.begin() + a * len * inner + begin * inner, width,
                  o.begin() + a * width);
    }
    if (out.requires_grad()) {
      record([x, out, outer, len, inner, begin, width]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto gx = x.grad();
        for (std::size_t a = 0; a < outer; ++a) {
          for (std::size_t i = 0; i < width; ++i) {
            gx[a * len * inner + begin * inner + i] += g[a * width + i];
          }
        }
      });
    }
    return out;
  }

  /// Rows of table[V, D] selected by ids -> [ids.size(), D].
  Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
    detail::require(table.rank() == 2, "embedding: table must be 2-D, got " +
                                           shape_str(table.shape()));
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw std::out_of_range("embedding: id " + std::to_string(id) +
                                " outside [0, " + std::to_string(v) + ")");
      }
    }
    Tensor<T> out({ids.size(), d}, track(table));
    auto o = out.data();
    auto tv = table.data();
    for (std::size_t n = 0; n < ids.size(); ++n) {
      std::copy_n(tv.begin() + static_cast<std::size_t>(ids[n]) * d, d,
                  o.begin() + n * d);
    }
    if (out.requires_grad()) {
      record([table, out, ids, d]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto gt = table.grad();
        for (std::size_t n = 0; n < ids.size(); ++n) {
          const std::size_t row = static_cast<std::size_t>(ids[n]) * d;
          for (std::size_t j = 0; j < d; ++j) gt[row + j] += g[n * d + j];
        }
      });
    }
    return out;
  }

  /// Same-padded 1-D convolution over time.
  /// x [B, T, Cin], weight [K, Cin, Cout] (K odd), bias [Cout] or undefined.
  Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight,
                   const Tensor<T>& bias) {
    detail::require(x.rank() == 3 && weight.rank() == 3 &&
                        weight.dim(1) == x.dim(2) && weight.dim(0) % 2 == 1,
                    "conv1d: input " + shape_str(x.shape()) + " weight " +
                        shape_str(weight.shape()));
    const std::size_t batch = x.dim(0), steps = x.dim(1), cin = x.dim(2);
    const std::size_t k = weight.dim(0), cout = weight.dim(2);
    if (bias.defined()) {
      detail::require(bias.rank() == 1 && bias.dim(0) == cout,
                      "conv1d: bias " + shape_str(bias.shape()) +
                          " for weight " + shape_str(weight.shape()));
    }
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t rows = batch * steps, width = k * cin;
    std::vector<T> cols(rows * width, T(0));
    auto xv = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < steps; ++t) {
        T* dst = cols.data() + (b * steps + t) * width;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) +
                                     static_cast<std::ptrdiff_t>(j) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
          std::copy_n(xv.begin() + (b * steps + static_cast<std::size_t>(src)) * cin,
                      cin, dst + j * cin);
        }
      }
    }
    const bool rg = recording() && (x.requires_grad() || weight.requires_grad() ||
                                    (bias.defined() && bias.requires_grad()));
    Tensor<T> out({batch, steps, cout}, rg);
    detail::gemm_nn(rows, cout, width, cols.data(), weight.data().data(),
                    out.data().data());
    if (bias.defined()) {
      auto o = out.data();
      auto bv = bias.data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cout; ++c) o[r * cout + c] += bv[c];
      }
    }
    if (out.requires_grad()) {
      record([x, weight, bias, out, cols = std::move(cols), batch, steps, cin,
              k, cout, pad, rows, width]() mutable {
        if (!out.has_grad()) return;
        const T* g = out.grad().data();
        if (weight.requires_grad()) {
          detail::gemm_tn(width, cout, rows, cols.data(), g,
                          weight.grad().data());
        }
        if (bias.defined() && bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cout; ++c) gb[c] += g[r * cout + c];
          }
        }
        if (x.requires_grad()) {
          std::vector<T> dcols(rows * width, T(0));
          detail::gemm_nt(rows, width, cout, g, weight.data().data(),
                          dcols.data());
          auto gx = x.grad();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < steps; ++t) {
              const T* src = dcols.data() + (b * steps + t) * width;
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t dst_t = static_cast<std::ptrdiff_t>(t) +
                                             static_cast<std::ptrdiff_t>(j) - pad;
                if (dst_t < 0 || dst_t >= static_cast<std::ptrdiff_t>(steps)) continue;
                T* dst = gx.data() + (b * steps + static_cast<std::size_t>(dst_t)) * cin;
                for (std::size_t c = 0; c < cin; ++c) dst[c] += src[j * cin + c];
              }
            }
          }
        }
      });
    }
    return out;
  }

  // ------------------------------------------------------------- recurrence

  /// One LSTM step. x [B, I], h/c [B, H], w_ih [I, 4H], w_hh [H, 4H],
  /// bias [4H]. Gate order: input, forget, cell, output.
  LstmStep<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h,
                        const Tensor<T>& c, const Tensor<T>& w_ih,
                        const Tensor<T>& w_hh, const Tensor<T>& bias) {
    detail::require(x.rank() == 2 && h.rank() == 2 && c.shape() == h.shape() &&
                        x.dim(0) == h.dim(0) && w_ih.rank() == 2 &&
                        w_ih.dim(0) == x.dim(1) && w_hh.rank() == 2 &&
                        w_hh.dim(0) == h.dim(1) && w_ih.dim(1) == 4 * h.dim(1) &&
                        w_hh.dim(1) == 4 * h.dim(1) && bias.rank() == 1 &&
                        bias.dim(0) == 4 * h.dim(1),
                    "lstm_cell: x " + shape_str(x.shape()) + " h " +
                        shape_str(h.shape()) + " w_ih " +
                        shape_str(w_ih.shape()) + " w_hh " +
                        shape_str(w_hh.shape()) + " bias " +
                        shape_str(bias.shape()));
    const std::size_t batch = x.dim(0), in = x.dim(1), hid = h.dim(1);
    const std::size_t g4 = 4 * hid;
    std::vector<T> gates(batch * g4, T(0));
    detail::gemm_nn(batch, g4, in, x.data().data(), w_ih.data().data(),
                    gates.data());
    detail::gemm_nn(batch, g4, hid, h.data().data(), w_hh.data().data(),
                    gates.data());
    const bool rg = recording() &&
                    (x.requires_grad() || h.requires_grad() || c.requires_grad() ||
                     w_ih.requires_grad() || w_hh.requires_grad() ||
                     bias.requires_grad());
    Tensor<T> h_out({batch, hid}, rg), c_out({batch, hid}, rg);
    std::vector<T> tanh_c(batch * hid);
    {
      auto bv = bias.data();
      auto cv = c.data();
      auto ho = h_out.data();
      auto co = c_out.data();
      for (std::size_t b = 0; b < batch; ++b) {
        T* a = gates.data() + b * g4;
        for (std::size_t j = 0; j < hid; ++j) {
          const T ig = detail::sigmoid(a[j] + bv[j]);
          const T fg = detail::sigmoid(a[hid + j] + bv[hid + j]);
          const T cg = std::tanh(a[2 * hid + j] + bv[2 * hid + j]);
          const T og = detail::sigmoid(a[3 * hid + j] + bv[3 * hid + j]);
          a[j] = ig;
          a[hid + j] = fg;
          a[2 * hid + j] = cg;
          a[3 * hid + j] = og;
          const T cn = fg * cv[b * hid + j] + ig * cg;
          const T tc = std::tanh(cn);
          co[b * hid + j] = cn;
          tanh_c[b * hid + j] = tc;
          ho[b * hid + j] = og * tc;
        }
      }
    }
    if (rg) {
      record([x, h, c, w_ih, w_hh, bias, h_out, c_out, gates = std::move(gates),
              tanh_c = std::move(tanh_c), batch, in, hid, g4]() mutable {
        if (!h_out.has_grad() && !c_out.has_grad()) return;
        std::vector<T> dpre(batch * g4);
        std::span<const T> dh = h_out.grad();
        std::span<const T> dc_out = c_out.grad();
        auto cv = c.data();
        std::vector<T> dc_prev(batch * hid);
        for (std::size_t b = 0; b < batch; ++b) {
          const T* a = gates.data() + b * g4;
          T* d = dpre.data() + b * g4;
          for (std::size_t j = 0; j < hid; ++j) {
            const std::size_t i = b * hid + j;
            const T ig = a[j], fg = a[hid + j], cg = a[2 * hid + j],
                    og = a[3 * hid + j];
            const T gh = dh.empty() ? T(0) : dh[i];
            const T tc = tanh_c[i];
            const T dc = (dc_out.empty() ? T(0) : dc_out[i]) +
                         gh * og * (T(1) - tc * tc);
            d[j] = dc * cg * ig * (T(1) - ig);
            d[hid + j] = dc * cv[i] * fg * (T(1) - fg);
            d[2 * hid + j] = dc * ig * (T(1) - cg * cg);
            d[3 * hid + j] = gh * tc * og * (T(1) - og);
            dc_prev[i] = dc * fg;
          }
        }
        if (c.requires_grad()) accumulate(c, dc_prev);
        if (bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < g4; ++j) gb[j] += dpre[b * g4 + j];
          }
        }
        if (w_ih.requires_grad()) {
          detail::gemm_tn(in, g4, batch, x.data().data(), dpre.data(),
                          w_ih.grad().data());
        }
        if (w_hh.requires_grad()) {
          detail::gemm_tn(hid, g4, batch, h.data().data(), dpre.data(),
                          w_hh.grad().data());
        }
        if (x.requires_grad()) {
          detail::gemm_nt(batch, in, g4, dpre.data(), w_ih.data().data(),
                          x.grad().data());
        }
        if (h.requires_grad()) {
          detail::gemm_nt(batch, hid, g4, dpre.data(), w_hh.data().data(),
                          h.grad().data());
        }
      });
    }
    return {h_out, c_out};
  }

  /// Whole-sequence unidirectional LSTM with fused backpropagation through
  /// time. x [B, T, I] -> [B, T, H]. Steps at or beyond lengths[b] emit zeros
  /// and reset the carried state, so the reverse direction starts at each
  /// sequence's true end. Empty lengths means every sequence spans T.
  Tensor<T> lstm_sequence(const Tensor<T>& x, const Tensor<T>& w_ih,
                          const Tensor<T>& w_hh, const Tensor<T>& bias,
                          const std::vector<std::size_t>& lengths, bool reverse) {
    detail::require(x.rank() == 3 && w_ih.rank() == 2 && w_ih.dim(0) == x.dim(2) &&
                        w_hh.rank() == 2 && w_ih.dim(1) == w_hh.dim(1) &&
                        w_hh.dim(1) == 4 * w_hh.dim(0) && bias.rank() == 1 &&
                        bias.dim(0) == w_hh.dim(1),
                    "lstm_sequence: x " + shape_str(x.shape()) + " w_ih " +
                        shape_str(w_ih.shape()) + " w_hh " +
                        shape_str(w_hh.shape()) + " bias " +
                        shape_str(bias.shape()));
    const std::size_t batch = x.dim(0), steps = x.dim(1), in = x.dim(2);
    const std::size_t hid = w_hh.dim(0), g4 = 4 * hid;
    std::vector<std::size_t> lens = lengths;
    if (lens.empty()) lens.assign(batch, steps);
    detail::require(lens.size() == batch, "lstm_sequence: " +
                                              std::to_string(lens.size()) +
                                              " lengths for batch " +
                                              std::to_string(batch));
    for (auto l : lens) {
      detail::require(l <= steps, "lstm_sequence: length exceeds time axis");
    }

    // Input projections for every step at once: [B*T, 4H].
    std::vector<T> act(batch * steps * g4, T(0));
    detail::gemm_nn(batch * steps, g4, in, x.data().data(), w_ih.data().data(),
                    act.data());
    {
      auto bv = bias.data();
      for (std::size_t r = 0; r < batch * steps; ++r) {
        for (std::size_t j = 0; j < g4; ++j) act[r * g4 + j] += bv[j];
      }
    }
    const bool rg = recording() && (x.requires_grad() || w_ih.requires_grad() ||
                                    w_hh.requires_grad() || bias.requires_grad());
    Tensor<T> out({batch, steps, hid}, rg);
    std::vector<T> cell(batch * steps * hid, T(0));
    std::vector<T> tanh_c(batch * steps * hid, T(0));
    std::vector<T> h_prev(batch * hid, T(0)), c_prev(batch * hid, T(0));
    std::vector<T> rec(batch * g4);
    auto o = out.data();
    const T* whh = w_hh.data().data();
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t t = reverse ? steps - 1 - s : s;
      std::fill(rec.begin(), rec.end(), T(0));
      detail::gemm_nn(batch, g4, hid, h_prev.data(), whh, rec.data());
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t row = b * steps + t;
        T* a = act.data() + row * g4;
        if (t >= lens[b]) {
          std::fill_n(a, g4, T(0));
          std::fill_n(h_prev.data() + b * hid, hid, T(0));
          std::fill_n(c_prev.data() + b * hid, hid, T(0));
          continue;
        }
        const T* r = rec.data() + b * g4;
        for (std::size_t j = 0; j < hid; ++j) {
          const T ig = detail::sigmoid(a[j] + r[j]);
          const T fg = detail::sigmoid(a[hid + j] + r[hid + j]);
          const T cg = std::tanh(a[2 * hid + j] + r[2 * hid + j]);
          const T og = detail::sigmoid(a[3 * hid + j] + r[3 * hid + j]);
          a[j] = ig;
          a[hid + j] = fg;
          a[2 * hid + j] = cg;
          a[3 * hid + j] = og;
          const T cn = fg * c_prev[b * hid + j] + ig * cg;
          const T tc = std::tanh(cn);
          cell[row * hid + j] = cn;
          tanh_c[row * hid + j] = tc;
          o[row * hid + j] = og * tc;
          c_prev[b * hid + j] = cn;
          h_prev[b * hid + j] = og * tc;
        }
      }
    }
    if (rg) {
      record([x, w_ih, w_hh, bias, out, act = std::move(act),
              cell = std::move(cell), tanh_c = std::move(tanh_c),
              lens = std::move(lens), batch, steps, in, hid, g4,
              reverse]() mutable {
        if (!out.has_grad()) return;
        auto dy = out.grad();
        auto y = out.data();
        std::vector<T> dpre(batch * steps * g4, T(0));
        std::vector<T> dh_next(batch * hid, T(0)), dc_next(batch * hid, T(0));
        std::vector<T> hp(batch * hid);
        std::vector<T> dgrad_hh(hid * g4, T(0));
        const T* whh = w_hh.data().data();
        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t t = reverse ? steps - 1 - s : s;
          // previous state in iteration order
          const bool has_prev = s > 0;
          const std::size_t tp = reverse ? t + 1 : t - 1;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t row = b * steps + t;
            T* d = dpre.data() + row * g4;
            if (t >= lens[b]) {
              std::fill_n(dh_next.data() + b * hid, hid, T(0));
              std::fill_n(dc_next.data() + b * hid, hid, T(0));
              std::fill_n(hp.data() + b * hid, hid, T(0));
              continue;
            }
            const T* a = act.data() + row * g4;
            const bool prev_valid = has_prev && tp < lens[b];
            for (std::size_t j = 0; j < hid; ++j) {
              const std::size_t i = row * hid + j;
              const T ig = a[j], fg = a[hid + j], cg = a[2 * hid + j],
                      og = a[3 * hid + j];
              const T cp = prev_valid ? cell[(b * steps + tp) * hid + j] : T(0);
              const T gh = dy[i] + dh_next[b * hid + j];
              const T tc = tanh_c[i];
              const T dc = dc_next[b * hid + j] + gh * og * (T(1) - tc * tc);
              d[j] = dc * cg * ig * (T(1) - ig);
              d[hid + j] = dc * cp * fg * (T(1) - fg);
              d[2 * hid + j] = dc * ig * (T(1) - cg * cg);
              d[3 * hid + j] = gh * tc * og * (T(1) - og);
              dc_next[b * hid + j] = dc * fg;
              hp[b * hid + j] = prev_valid ? y[(b * steps + tp) * hid + j] : T(0);
            }
          }
          // dh_prev = dpre_t * W_hh^T ; dW_hh += h_prev^T * dpre_t
          std::vector<T> dpre_t(batch * g4);
          for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(dpre.data() + (b * steps + t) * g4, g4,
                        dpre_t.data() + b * g4);
          }
          std::fill(dh_next.begin(), dh_next.end(), T(0));
          detail::gemm_nt(batch, hid, g4, dpre_t.data(), whh, dh_next.data());
          detail::gemm_tn(hid, g4, batch, hp.data(), dpre_t.data(),
                          dgrad_hh.data());
        }
        if (w_hh.requires_grad()) accumulate(w_hh, dgrad_hh);
        if (bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t r = 0; r < batch * steps; ++r) {
            for (std::size_t j = 0; j < g4; ++j) gb[j] += dpre[r * g4 + j];
          }
        }
        if (w_ih.requires_grad()) {
          detail::gemm_tn(in, g4, batch * steps, x.data().data(), dpre.data(),
                          w_ih.grad().data());
        }
        if (x.requires_grad()) {
          detail::gemm_nt(batch * steps, in, g4, dpre.data(), w_ih.data().data(),
                          x.grad().data());
        }
      });
    }
    return out;
  }

  // -------------------------------------------------------------- attention

  /// Normalized Gaussian-mixture alignment over positions [0, T).
  ///   raw[b,t] = sum_k w[b,k] exp(-(t - mu[b,k])^2 / (2 sigma[b,k]^2))
  ///   out[b,t] = raw[b,t] / sum_{t' < len_b} raw[b,t']    (0 past len_b)
  /// Evaluated in log space so the normalization never divides by an
  /// underflowed sum.
  Tensor<T> gmm_alignment(const Tensor<T>& mu, const Tensor<T>& sigma,
                          const Tensor<T>& w, std::size_t steps,
                          const std::vector<std::size_t>& lengths) {
    detail::require(mu.rank() == 2 && sigma.shape() == mu.shape() &&
                        w.shape() == mu.shape(),
                    "gmm_alignment: mu " + shape_str(mu.shape()) + " sigma " +
                        shape_str(sigma.shape()) + " w " + shape_str(w.shape()));
    const std::size_t batch = mu.dim(0), mix = mu.dim(1);
    std::vector<std::size_t> lens = lengths;
    if (lens.empty()) lens.assign(batch, steps);
    detail::require(lens.size() == batch, "gmm_alignment: lengths size");
    for (auto l : lens) {
      detail::require(l >= 1 && l <= steps, "gmm_alignment: bad length " +
                                                std::to_string(l));
    }
    const bool rg = recording() &&
                    (mu.requires_grad() || sigma.requires_grad() || w.requires_grad());
    Tensor<T> out({batch, steps}, rg);
    // resp[b,t,k]: posterior of component k at position t
    std::vector<T> resp(batch * steps * mix, T(0));
    auto o = out.data();
    auto mv = mu.data();
    auto sv = sigma.data();
    auto wv = w.data();
    std::vector<T> logits(steps);
    for (std::size_t b = 0; b < batch; ++b) {
      T best = -std::numeric_limits<T>::infinity();
      for (std::size_t t = 0; t < lens[b]; ++t) {
        T* r = resp.data() + (b * steps + t) * mix;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t k = 0; k < mix; ++k) {
          const T wk = wv[b * mix + k];
          if (wk <= T(0)) {
            r[k] = -std::numeric_limits<T>::infinity();
            continue;
          }
          const T s = sv[b * mix + k];
          const T dt = static_cast<T>(t) - mv[b * mix + k];
          r[k] = std::log(wk) - dt * dt / (T(2) * s * s);
          mx = std::max(mx, r[k]);
        }
        T total = 0;
        for (std::size_t k = 0; k < mix; ++k) {
          r[k] = std::isinf(r[k]) ? T(0) : std::exp(r[k] - mx);
          total += r[k];
        }
        for (std::size_t k = 0; k < mix; ++k) r[k] /= total;
        logits[t] = mx + std::log(total);
        best = std::max(best, logits[t]);
      }
      T z = 0;
      for (std::size_t t = 0; t < lens[b]; ++t) {
        o[b * steps + t] = std::exp(logits[t] - best);
        z += o[b * steps + t];
      }
      for (std::size_t t = 0; t < lens[b]; ++t) o[b * steps + t] /= z;
    }
    if (rg) {
      record([mu, sigma, w, out, resp = std::move(resp), lens = std::move(lens),
              batch, mix, steps]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto a = out.data();
        auto mv = mu.data();
        auto sv = sigma.data();
        auto wv = w.data();
        std::vector<T> dmu(batch * mix, T(0)), dsig(batch * mix, T(0)),
            dw(batch * mix, T(0));
        for (std::size_t b = 0; b < batch; ++b) {
          T dot = 0;
          for (std::size_t t = 0; t < lens[b]; ++t) {
            dot += a[b * steps + t] * g[b * steps + t];
          }
          for (std::size_t t = 0; t < lens[b]; ++t) {
            const T dl = a[b * steps + t] * (g[b * steps + t] - dot);
            const T* r = resp.data() + (b * steps + t) * mix;
            for (std::size_t k = 0; k < mix; ++k) {
              if (r[k] == T(0)) continue;
              const T da = dl * r[k];
              const T s = sv[b * mix + k];
              const T dt = static_cast<T>(t) - mv[b * mix + k];
              dmu[b * mix + k] += da * dt / (s * s);
              dsig[b * mix + k] += da * dt * dt / (s * s * s);
              dw[b * mix + k] += da / wv[b * mix + k];
            }
          }
        }
        if (mu.requires_grad()) accumulate(mu, dmu);
        if (sigma.requires_grad()) accumulate(sigma, dsig);
        if (w.requires_grad()) accumulate(w, dw);
      });
    }
    return out;
  }

  /// Context vectors: alpha [B, T] weighted sum over memory [B, T, D].
  Tensor<T> attend(const Tensor<T>& alpha, const Tensor<T>& memory) {
    detail::require(alpha.rank() == 2 && memory.rank() == 3 &&
                        memory.dim(0) == alpha.dim(0) &&
                        memory.dim(1) == alpha.dim(1),
                    "attend: alpha " + shape_str(alpha.shape()) + " memory " +
                        shape_str(memory.shape()));
    const std::size_t batch = memory.dim(0), steps = memory.dim(1),
                      d = memory.dim(2);
    Tensor<T> out({batch, d}, track(alpha, memory));
    auto o = out.data();
    auto av = alpha.data();
    auto mv = memory.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < steps; ++t) {
        const T wt = av[b * steps + t];
        if (wt == T(0)) continue;
        const T* m = mv.data() + (b * steps + t) * d;
        T* dst = o.data() + b * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += wt * m[j];
      }
    }
    if (out.requires_grad()) {
      record([alpha, memory, out, batch, steps, d]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto av = alpha.data();
        auto mv = memory.data();
        if (alpha.requires_grad()) {
          auto ga = alpha.grad();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < steps; ++t) {
              T acc = 0;
              const T* m = mv.data() + (b * steps + t) * d;
              for (std::size_t j = 0; j < d; ++j) acc += g[b * d + j] * m[j];
              ga[b * steps + t] += acc;
            }
          }
        }
        if (memory.requires_grad()) {
          auto gm = memory.grad();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t t = 0; t < steps; ++t) {
              const T wt = av[b * steps + t];
              if (wt == T(0)) continue;
              T* dst = gm.data() + (b * steps + t) * d;
              for (std::size_t j = 0; j < d; ++j) dst[j] += wt * g[b * d + j];
            }
          }
        }
      });
    }
    return out;
  }

  // -------------------------------------------------------------- reductions

  Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (T v : x.data()) total += v;
    Tensor<T> out(Shape{}, std::vector<T>{total}, track(x));
    if (out.requires_grad()) {
      record([x, out]() mutable {
        if (!out.has_grad()) return;
        const T g = out.grad()[0];
        for (auto& v : x.grad()) v += g;
      });
    }
    return out;
  }

  Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
  }

  /// mean((a - b)^2) over all elements.
  Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
    same_shape("mse_loss", a, b);
    const std::size_t n = a.size();
    detail::require(n > 0, "mse_loss: empty operands");
    T total = 0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < n; ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
    Tensor<T> out(Shape{}, std::vector<T>{total / static_cast<T>(n)}, track(a, b));
    if (out.requires_grad()) {
      record([a, b, out, n]() mutable {
        if (!out.has_grad()) return;
        const T g = out.grad()[0] * T(2) / static_cast<T>(n);
        auto x = a.data();
        auto y = b.data();
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (std::size_t i = 0; i < n; ++i) ga[i] += g * (x[i] - y[i]);
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g * (x[i] - y[i]);
        }
      });
    }
    return out;
  }

  /// Frame-masked MSE. a, b: [..., D]; mask holds one weight per leading
  /// position (size == a.size() / D). Normalized by D * sum(mask).
  Tensor<T> masked_mse(const Tensor<T>& a, const Tensor<T>& b,
                       const std::vector<T>& mask) {
    same_shape("masked_mse", a, b);
    detail::require(a.rank() >= 1 && a.shape().back() > 0 &&
                        mask.size() * a.shape().back() == a.size(),
                    "masked_mse: mask of " + std::to_string(mask.size()) +
                        " for " + shape_str(a.shape()));
    const std::size_t d = a.shape().back();
    T denom = 0;
    for (T m : mask) denom += m;
    detail::require(denom > T(0), "masked_mse: mask selects nothing");
    denom *= static_cast<T>(d);
    T total = 0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t r = 0; r < mask.size(); ++r) {
      if (mask[r] == T(0)) continue;
      T acc = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const T e = x[r * d + j] - y[r * d + j];
        acc += e * e;
      }
      total += mask[r] * acc;
    }
    Tensor<T> out(Shape{}, std::vector<T>{total / denom}, track(a, b));
    if (out.requires_grad()) {
      record([a, b, out, mask, d, denom]() mutable {
        if (!out.has_grad()) return;
        const T g = out.grad()[0] * T(2) / denom;
        auto x = a.data();
        auto y = b.data();
        std::span<T> ga, gb;
        if (a.requires_grad()) ga = a.grad();
        if (b.requires_grad()) gb = b.grad();
        for (std::size_t r = 0; r < mask.size(); ++r) {
          if (mask[r] == T(0)) continue;
          for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            const T e = g * mask[r] * (x[i] - y[i]);
            if (!ga.empty()) ga[i] += e;
            if (!gb.empty()) gb[i] -= e;
          }
        }
      });
    }
    return out;
  }

  /// Masked binary cross-entropy on logits, averaged over sum(mask).
  Tensor<T> bce_with_logits(const Tensor<T>& logits, const std::vector<T>& targets,
                            const std::vector<T>& mask) {
    detail::require(targets.size() == logits.size() && mask.size() == logits.size(),
                    "bce_with_logits: logits " + shape_str(logits.shape()) +
                        " targets " + std::to_string(targets.size()) + " mask " +
                        std::to_string(mask.size()));
    T denom = 0;
    for (T m : mask) denom += m;
    detail::require(denom > T(0), "bce_with_logits: mask selects nothing");
    T total = 0;
    auto x = logits.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (mask[i] == T(0)) continue;
      const T v = x[i];
      total += mask[i] * (std::max(v, T(0)) - v * targets[i] +
                          std::log1p(std::exp(-std::abs(v))));
    }
    Tensor<T> out(Shape{}, std::vector<T>{total / denom}, track(logits));
    if (out.requires_grad()) {
      record([logits, out, targets, mask, denom]() mutable {
        if (!out.has_grad()) return;
        const T g = out.grad()[0] / denom;
        auto x = logits.data();
        auto gx = logits.grad();
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (mask[i] == T(0)) continue;
          gx[i] += g * mask[i] * (detail::sigmoid(x[i]) - targets[i]);
        }
      });
    }
    return out;
  }

  // --------------------------------------------------- gradient routing

  /// Identity forward; the result never receives or passes gradient.
  Tensor<T> stop_gradient(const Tensor<T>& x) {
    return Tensor<T>(x.shape(), x.values(), false);
  }

  /// Forward value of `quantized`; backward copies the incoming gradient to
  /// `continuous` unchanged and gives `quantized` nothing.
  Tensor<T> straight_through(const Tensor<T>& continuous,
                             const Tensor<T>& quantized) {
    same_shape("straight_through", continuous, quantized);
    Tensor<T> out(quantized.shape(), quantized.values(), track(continuous));
    if (out.requires_grad()) {
      record([continuous, out]() mutable {
        if (!out.has_grad()) return;
        accumulate(continuous, out.grad());
      });
    }
    return out;
  }

 private:
  template <typename... Ts>
  bool track(const Ts&... ts) const {
    return recording() && (ts.requires_grad() || ...);
  }

  void record(std::function<void()> fn) {
    entries_.push_back(std::move(fn));
    consumed_ = false;
  }

  static void accumulate(Tensor<T> t, std::span<const T> g) {
    auto dst = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
  static void accumulate(Tensor<T> t, const std::vector<T>& g) {
    accumulate(t, std::span<const T>(g));
  }

  static void same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
      throw ShapeError(std::string(op) + ": shape mismatch " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }

  static std::tuple<std::size_t, std::size_t, std::size_t> split_axis(
      const Shape& s, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    return {outer, s[axis], inner};
  }

  template <typename F, typename D>
  Tensor<T> unary(const Tensor<T>& x, F f, D dfdx) {
    Tensor<T> out(x.shape(), track(x));
    auto o = out.data();
    auto xv = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(xv[i]);
    if (out.requires_grad()) {
      record([x, out, dfdx]() mutable {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto xv = x.data();
        auto y = out.data();
        auto gx = x.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], y[i]);
      });
    }
    return out;
  }

  Mode mode_;
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

}  // namespace vclone

#endif  // VCLONE_TAPE_HPP_
