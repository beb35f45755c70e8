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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hga/autodiff/tensor.hpp"
#include "hga/error.hpp"

namespace hga::ad {

/// Adam moments and hyperparameters. Defaults are the usual
/// lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8.
template <class T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update of every parameter from its grad.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state) {
  if (!(state.lr > 0)) throw ParameterError("adam_step: lr must be > 0");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: parameter count changed");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(state.lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(state.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& w = params[k]->value.storage();
    const auto& g = params[k]->grad.storage();
    auto& m = state.m[k].storage();
    auto& v = state.v[k].storage();
    if (g.size() != w.size() || m.size() != w.size()) {
      throw DimensionError("adam_step: gradient/moment shape mismatch");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

/// Owns an AdamState over a fixed parameter list.
template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Parameter<T>*> params, double lr = 1e-3) : params_(std::move(params)) {
    state_.lr = lr;
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }
  void step() { adam_step<T>(params_, state_); }

  double lr() const { return state_.lr; }
  void set_lr(double lr) { state_.lr = lr; }
  const AdamState<T>& state() const { return state_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamState<T> state_;
};

}  // namespace hga::ad
