// Copyright 2026 The HGA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hga/autodiff/tensor.hpp"
#include "hga/error.hpp"
#include "hga/rng.hpp"

namespace hga::ad {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
MatMap<T> as_mat(Tensor<T>& t) {
  return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <class T>
ConstMatMap<T> as_mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <class T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* g, std::size_t id) : g_(g), id_(id) {}

  const Tensor<T>& value() const { return g_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph<T>& graph() const { return *g_; }
  std::size_t id() const { return id_; }
  bool valid() const { return g_ != nullptr; }

 private:
  Graph<T>* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only tape. Nodes are recorded in evaluation order, so reverse
/// insertion order is a valid reverse topological order.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Throw DivergenceError as soon as an op produces NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}, nullptr, "constant"); }

  /// Constant cut from the tape. With a detach log attached, values are
  /// appended to it, or replayed from it in order when `replay` is set.
  Var<T> detached(Tensor<T> value) {
    if (detach_log_ != nullptr) {
      if (replay_) {
        if (detach_cursor_ >= detach_log_->size()) throw ContractError("detach replay: log exhausted");
        value = (*detach_log_)[detach_cursor_++];
      } else {
        detach_log_->push_back(value);
      }
    }
    return push(std::move(value), false, {}, nullptr, "stop_gradient");
  }

  void attach_detach_log(std::vector<Tensor<T>>* log, bool replay) {
    detach_log_ = log;
    replay_ = replay;
    detach_cursor_ = 0;
  }

  Var<T> input(Tensor<T> value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, {}, nullptr, "input");
  }

  /// Leaf bound to a Parameter; backward() adds into param.grad.
  Var<T> param(Parameter<T>& p) {
    Var<T> v = push(p.value, true, {}, nullptr, "param");
    nodes_[v.id()].param = &p;
    return v;
  }

  /// Records an op. `backward` reads grad(self) and accumulates into inputs.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward,
                const char* op) {
    bool rg = false;
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
    return push(std::move(value), rg, std::move(inputs), rg ? std::move(backward) : nullptr, op);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var<T> v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() target with respect to `v` (zeros when
  /// no gradient reached it).
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id()];
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
  }

  /// Mutable gradient buffer of node `id`, allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  bool wants_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor<T>& value_of(std::size_t id) const { return nodes_[id].value; }
  std::size_t input_of(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }

  /// Reverse sweep from a scalar loss. Each node is visited exactly once.
  void backward(Var<T> loss) {
    if (value(loss).size() != 1) {
      throw ContractError("backward() needs a scalar loss, got " + shape_str(value(loss).shape()));
    }
    grad_buffer(loss.id())[0] = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param != nullptr) {
        auto& pg = n.param->grad.storage();
        if (pg.size() != n.grad.size()) n.param->grad = Tensor<T>(n.param->value.shape());
        auto& acc = n.param->grad.storage();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += n.grad[i];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> value, bool rg, std::vector<std::size_t> inputs, BackwardFn fn,
              const char* op) {
    if (check_finite_ && !value.all_finite()) {
      throw DivergenceError(std::string("non-finite value produced by op '") + op + "'");
    }
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(fn), nullptr, rg});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  std::vector<Tensor<T>>* detach_log_ = nullptr;
  bool replay_ = false;
  std::size_t detach_cursor_ = 0;
  bool check_finite_ = false;
};

namespace detail {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <class T>
void require_rank2(const Tensor<T>& a, const char* op) {
  if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

template <class T>
void accumulate(Graph<T>& g, std::size_t id, const Tensor<T>& delta) {
  if (!g.wants_grad(id)) return;
  auto& buf = g.grad_buffer(id).storage();
  const auto& d = delta.storage();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += d[i];
}

/// Elementwise unary op with derivative f'(x, y) evaluated on input/output.
template <class T, class F, class DF>
Var<T> unary(Var<T> x, F f, DF df, const char* op) {
  Graph<T>& g = x.graph();
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return g.record(std::move(out), {x.id()},
                  [df](Graph<T>& gr, std::size_t self) {
                    const std::size_t in = gr.input_of(self, 0);
                    if (!gr.wants_grad(in)) return;
                    const auto& xv = gr.value_of(in);
                    const auto& yv = gr.value_of(self);
                    const auto& gy = gr.grad_buffer(self);
                    auto& gx = gr.grad_buffer(in);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(xv[i], yv[i]);
                  },
                  op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

/// a[m x k] * b[k x n].
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::require_rank2(a.value(), "matmul");
  detail::require_rank2(b.value(), "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Tensor<T> out({a.rows(), b.cols()});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value());
  return a.graph().record(std::move(out), {a.id(), b.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const std::size_t ia = g.input_of(self, 0), ib = g.input_of(self, 1);
                            const auto gy = as_mat(g.grad_buffer(self));
                            if (g.wants_grad(ia)) as_mat(g.grad_buffer(ia)).noalias() += gy * as_mat(g.value_of(ib)).transpose();
                            if (g.wants_grad(ib)) as_mat(g.grad_buffer(ib)).noalias() += as_mat(g.value_of(ia)).transpose() * gy;
                          },
                          "matmul");
}

/// x[B x I] * W[I x O] + b[O].
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_rank2(x.value(), "affine");
  detail::require_rank2(w.value(), "affine");
  if (x.cols() != w.rows() || b.value().size() != w.cols()) {
    throw DimensionError("affine: x" + shape_str(x.shape()) + " W" + shape_str(w.shape()) + " b" +
                         shape_str(b.shape()));
  }
  Tensor<T> out({x.rows(), w.cols()});
  auto om = as_mat(out);
  om.noalias() = as_mat(x.value()) * as_mat(w.value());
  const auto& bv = b.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return x.graph().record(std::move(out), {x.id(), w.id(), b.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const std::size_t ix = g.input_of(self, 0), iw = g.input_of(self, 1),
                                              ib = g.input_of(self, 2);
                            const auto& gyt = g.grad_buffer(self);
                            const auto gy = as_mat(gyt);
                            if (g.wants_grad(ix)) as_mat(g.grad_buffer(ix)).noalias() += gy * as_mat(g.value_of(iw)).transpose();
                            if (g.wants_grad(iw)) as_mat(g.grad_buffer(iw)).noalias() += as_mat(g.value_of(ix)).transpose() * gy;
                            if (g.wants_grad(ib)) {
                              auto& gb = g.grad_buffer(ib);
                              for (std::size_t r = 0; r < gyt.rows(); ++r) {
                                auto row = gyt.row(r);
                                for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
                              }
                            }
                          },
                          "affine");
}

/// Pairwise squared distances between rows: out[i, j] = |a_i - b_j|^2.
template <class T>
Var<T> sq_dist(Var<T> a, Var<T> b) {
  detail::require_rank2(a.value(), "sq_dist");
  detail::require_rank2(b.value(), "sq_dist");
  if (a.cols() != b.cols()) {
    throw DimensionError("sq_dist: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto am = as_mat(a.value());
  const auto bm = as_mat(b.value());
  Tensor<T> out({a.rows(), b.rows()});
  auto om = as_mat(out);
  om.noalias() = T(-2) * am * bm.transpose();
  const auto an = am.rowwise().squaredNorm().eval();
  const auto bn = bm.rowwise().squaredNorm().eval();
  om.colwise() += an;
  om.rowwise() += bn.transpose();
  return a.graph().record(
      std::move(out), {a.id(), b.id()},
      [](Graph<T>& g, std::size_t self) {
        const std::size_t ia = g.input_of(self, 0), ib = g.input_of(self, 1);
        const auto gy = as_mat(g.grad_buffer(self));
        const auto am = as_mat(g.value_of(ia));
        const auto bm = as_mat(g.value_of(ib));
        if (g.wants_grad(ia)) {
          auto ga = as_mat(g.grad_buffer(ia));
          const auto rs = gy.rowwise().sum().eval();
          ga += T(2) * (am.array().colwise() * rs.array()).matrix();
          ga.noalias() -= T(2) * gy * bm;
        }
        if (g.wants_grad(ib)) {
          auto gb = as_mat(g.grad_buffer(ib));
          const auto cs = gy.colwise().sum().transpose().eval();
          gb += T(2) * (bm.array().colwise() * cs.array()).matrix();
          gb.noalias() -= T(2) * gy.transpose() * am;
        }
      },
      "sq_dist");
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.graph().record(std::move(out), {a.id(), b.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const auto& gy = g.grad_buffer(self);
                            detail::accumulate(g, g.input_of(self, 0), gy);
                            detail::accumulate(g, g.input_of(self, 1), gy);
                          },
                          "add");
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.graph().record(std::move(out), {a.id(), b.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const auto& gy = g.grad_buffer(self);
                            detail::accumulate(g, g.input_of(self, 0), gy);
                            const std::size_t ib = g.input_of(self, 1);
                            if (!g.wants_grad(ib)) return;
                            auto& gb = g.grad_buffer(ib);
                            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
                          },
                          "sub");
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.graph().record(std::move(out), {a.id(), b.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const std::size_t ia = g.input_of(self, 0), ib = g.input_of(self, 1);
                            const auto& gy = g.grad_buffer(self);
                            if (g.wants_grad(ia)) {
                              auto& ga = g.grad_buffer(ia);
                              const auto& bv = g.value_of(ib);
                              for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bv[i];
                            }
                            if (g.wants_grad(ib)) {
                              auto& gb = g.grad_buffer(ib);
                              const auto& av = g.value_of(ia);
                              for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * av[i];
                            }
                          },
                          "mul");
}

template <class T>
Var<T> scale(Var<T> x, T s) {
  return detail::unary(x, [s](T v) { return s * v; }, [s](T, T) { return s; }, "scale");
}

template <class T>
Var<T> relu(Var<T> x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); },
      "relu");
}

template <class T>
Var<T> exp(Var<T> x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; }, "exp");
}

/// Clamp with zero gradient outside [lo, hi].
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return detail::unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); }, "clamp");
}

/// Forward identity, backward zero.
template <class T>
Var<T> stop_gradient(Var<T> x) {
  return x.graph().detached(x.value());
}

/// Same data under a new shape of equal size.
template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return x.graph().record(x.value().reshaped(std::move(shape)), {x.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const std::size_t in = g.input_of(self, 0);
                            if (!g.wants_grad(in)) return;
                            auto& gx = g.grad_buffer(in).storage();
                            const auto& gy = g.grad_buffer(self).storage();
                            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
                          },
                          "reshape");
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  return x.graph().record(Tensor<T>::scalar(s), {x.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const std::size_t in = g.input_of(self, 0);
                            if (!g.wants_grad(in)) return;
                            const T gy = g.grad_buffer(self)[0];
                            for (auto& v : g.grad_buffer(in).storage()) v += gy;
                          },
                          "sum");
}

template <class T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

/// Column means of a matrix: [B x C] -> [1 x C].
template <class T>
Var<T> mean_rows(Var<T> x) {
  detail::require_rank2(x.value(), "mean_rows");
  const std::size_t b = x.rows();
  Tensor<T> out({1, x.cols()});
  as_mat(out) = as_mat(x.value()).colwise().mean();
  return x.graph().record(std::move(out), {x.id()},
                          [b](Graph<T>& g, std::size_t self) {
                            const std::size_t in = g.input_of(self, 0);
                            if (!g.wants_grad(in)) return;
                            const auto gy = as_mat(g.grad_buffer(self));
                            as_mat(g.grad_buffer(in)).rowwise() += gy.row(0) / static_cast<T>(b);
                          },
                          "mean_rows");
}

/// Sum of squares of all elements.
template <class T>
Var<T> sum_squares(Var<T> x) {
  return sum(mul(x, x));
}

// ---------------------------------------------------------------------------
// Probabilistic ops

/// Row softmax over the last axis; the row max is subtracted first.
template <class T>
Var<T> softmax(Var<T> x) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    const T m = *std::max_element(in.begin(), in.end());
    T z = 0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (o[c] = std::exp(in[c] - m));
    for (auto& v : o) v /= z;
  }
  return x.graph().record(std::move(out), {x.id()},
                          [](Graph<T>& g, std::size_t self) {
                            const std::size_t in = g.input_of(self, 0);
                            if (!g.wants_grad(in)) return;
                            const auto& y = g.value_of(self);
                            const auto& gy = g.grad_buffer(self);
                            auto& gx = g.grad_buffer(in);
                            for (std::size_t r = 0; r < y.rows(); ++r) {
                              auto yr = y.row(r);
                              auto gyr = gy.row(r);
                              auto gxr = gx.row(r);
                              T dot = 0;
                              for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gyr[c];
                              for (std::size_t c = 0; c < yr.size(); ++c) gxr[c] += yr[c] * (gyr[c] - dot);
                            }
                          },
                          "softmax");
}

/// Mean over rows of -log softmax(logits)[target], natural log.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
  detail::require_rank2(logits.value(), "cross_entropy");
  const auto& lv = logits.value();
  if (targets.size() != lv.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(lv.rows()) + " rows");
  }
  const std::size_t c = lv.cols();
  Tensor<T> probs(lv.shape());
  T loss = 0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(c) + ")");
    }
    auto in = lv.row(r);
    auto p = probs.row(r);
    const T m = *std::max_element(in.begin(), in.end());
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (p[j] = std::exp(in[j] - m));
    for (auto& v : p) v /= z;
    loss += -(in[t] - m - std::log(z));
  }
  const T inv_b = T(1) / static_cast<T>(lv.rows());
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.graph().record(
      Tensor<T>::scalar(loss * inv_b), {logits.id()},
      [probs = std::move(probs), tgt = std::move(tgt), inv_b](Graph<T>& g, std::size_t self) {
        const std::size_t in = g.input_of(self, 0);
        if (!g.wants_grad(in)) return;
        const T gy = g.grad_buffer(self)[0] * inv_b;
        auto& gx = g.grad_buffer(in);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          auto p = probs.row(r);
          auto gr = gx.row(r);
          for (std::size_t j = 0; j < p.size(); ++j) gr[j] += gy * p[j];
          gr[static_cast<std::size_t>(tgt[r])] -= gy;
        }
      },
      "cross_entropy");
}

/// Mean over all elements of (a - b)^2.
template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
  detail::require_same_shape(a.value(), b.value(), "mse");
  return mean(mul(sub(a, b), sub(a, b)));
}

/// Mean over rows of -sum_j p_j ln p_j with 0 ln 0 := 0. Rows must be
/// probability vectors (sum to 1 within 1e-5, entries >= 0).
template <class T>
Var<T> categorical_entropy(Var<T> p) {
  const auto& pv = p.value();
  T h = 0;
  for (std::size_t r = 0; r < pv.rows(); ++r) {
    T s = 0;
    for (T v : pv.row(r)) {
      if (v < T(0)) throw ValidationError("categorical_entropy: negative probability");
      s += v;
      if (v > T(0)) h -= v * std::log(v);
    }
    if (std::abs(s - T(1)) > T(1e-5)) {
      throw ValidationError("categorical_entropy: row " + std::to_string(r) + " sums to " +
                            std::to_string(static_cast<double>(s)));
    }
  }
  const T inv_b = T(1) / static_cast<T>(pv.rows());
  return p.graph().record(Tensor<T>::scalar(h * inv_b), {p.id()},
                          [inv_b](Graph<T>& g, std::size_t self) {
                            const std::size_t in = g.input_of(self, 0);
                            if (!g.wants_grad(in)) return;
                            const T gy = g.grad_buffer(self)[0] * inv_b;
                            const auto& pv = g.value_of(in);
                            auto& gp = g.grad_buffer(in);
                            for (std::size_t i = 0; i < gp.size(); ++i) {
                              if (pv[i] > T(0)) gp[i] -= gy * (std::log(pv[i]) + T(1));
                            }
                          },
                          "categorical_entropy");
}

/// Log-sigma clamp bounds: sigma = exp(log_sigma) is kept in [1e-6, 1e3].
template <class T>
inline constexpr T kLogSigmaMin = T(-13.815510557964274);  // ln 1e-6
template <class T>
inline constexpr T kLogSigmaMax = T(6.907755278982137);  // ln 1e3

/// mu + exp(log_sigma) * eps with eps ~ N(0, I) drawn row-major from `rng`.
/// When `rng` is null the noise is zero (deterministic evaluation).
template <class T>
Var<T> gaussian_reparam(Var<T> mu, Var<T> log_sigma, CounterRng* rng) {
  detail::require_same_shape(mu.value(), log_sigma.value(), "gaussian_reparam");
  Var<T> sigma = exp(clamp(log_sigma, kLogSigmaMin<T>, kLogSigmaMax<T>));
  Tensor<T> eps(mu.shape());
  if (rng != nullptr) {
    for (auto& v : eps.storage()) v = static_cast<T>(rng->normal());
  }
  Var<T> noise = mu.graph().constant(std::move(eps));
  return add(mu, mul(sigma, noise));
}

/// Mean over the batch of sum_d 0.5 (mu^2 + sigma^2 - 2 ln sigma - 1).
template <class T>
Var<T> kl_unit_gaussian(Var<T> mu, Var<T> log_sigma) {
  detail::require_same_shape(mu.value(), log_sigma.value(), "kl_unit_gaussian");
  Var<T> ls = clamp(log_sigma, kLogSigmaMin<T>, kLogSigmaMax<T>);
  Var<T> var = exp(scale(ls, T(2)));
  const std::size_t b = mu.rows();
  Graph<T>& g = mu.graph();
  // 0.5 * (mu^2 + sigma^2 - 2 ls) summed, minus 0.5 per element.
  Var<T> total = sum(add(add(mul(mu, mu), var), scale(ls, T(-2))));
  const T n_elem = static_cast<T>(mu.value().size());
  Var<T> shifted = add(scale(total, T(0.5)), g.constant(Tensor<T>::scalar(T(-0.5) * n_elem)));
  return scale(shifted, T(1) / static_cast<T>(b));
}

template <class T>
struct GumbelSample {
  Var<T> one_hot;
  Var<T> soft;
};

/// soft = softmax((logits + g) / tau), g ~ Gumbel(0, 1) row-major from rng.
/// one_hot carries argmax(soft) forward and passes gradients straight
/// through to soft.
template <class T>
GumbelSample<T> gumbel_softmax_sample(Var<T> logits, T tau, CounterRng& rng) {
  if (!(tau > T(0))) throw ParameterError("gumbel_softmax_sample: tau must be > 0");
  Graph<T>& g = logits.graph();
  Tensor<T> noise(logits.shape());
  for (auto& v : noise.storage()) v = static_cast<T>(rng.gumbel());
  Var<T> perturbed = add(logits, g.constant(std::move(noise)));
  Var<T> soft = softmax(scale(perturbed, T(1) / tau));
  const auto& sv = soft.value();
  Tensor<T> hard(sv.shape());
  for (std::size_t r = 0; r < sv.rows(); ++r) {
    auto row = sv.row(r);
    hard(r, static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())) = T(1);
  }
  Var<T> one_hot = g.record(std::move(hard), {soft.id()},
                            [](Graph<T>& gr, std::size_t self) {
                              detail::accumulate(gr, gr.input_of(self, 0), gr.grad_buffer(self));
                            },
                            "straight_through");
  return {one_hot, soft};
}

/// Index of the row maximum / minimum (non-differentiable helpers).
template <class T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& x) {
  std::vector<std::size_t> idx(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    idx[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return idx;
}

template <class T>
std::vector<std::size_t> argmin_rows(const Tensor<T>& x) {
  std::vector<std::size_t> idx(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    idx[r] = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
  }
  return idx;
}

template <class T>
Tensor<T> one_hot_rows(std::span<const std::size_t> idx, std::size_t classes) {
  Tensor<T> out({idx.size(), classes});
  for (std::size_t r = 0; r < idx.size(); ++r) out(r, idx[r]) = T(1);
  return out;
}

}  // namespace hga::ad
