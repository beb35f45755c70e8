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

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hga/autodiff/graph.hpp"

namespace hga::ad {

/// Builds a scalar loss on a fresh graph from the current parameter values.
/// Must be a pure function of the parameters (reseed any sampling inside).
using LossFn = std::function<Var<double>(Graph<double>&)>;

/// Compares reverse-mode gradients against central differences and returns
/// max over all coordinates of |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
/// Stop-gradient values are held at the unperturbed point while differencing.
inline double check_gradients(const LossFn& loss_fn, const std::vector<Parameter<double>*>& params,
                              double eps = 1e-6) {
  for (auto* p : params) p->zero_grad();
  std::vector<Tensor<double>> detached;
  {
    Graph<double> g;
    g.attach_detach_log(&detached, false);
    Var<double> loss = loss_fn(g);
    if (loss.value().size() != 1) {
      throw ContractError("check_gradients: loss must be scalar, got " + shape_str(loss.shape()));
    }
    g.backward(loss);
  }
  auto eval = [&] {
    Graph<double> g;
    g.attach_detach_log(&detached, true);
    return loss_fn(g).value().item();
  };
  double worst = 0.0;
  for (auto* p : params) {
    auto& w = p->value.storage();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double up = eval();
      w[i] = orig - eps;
      const double down = eval();
      w[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = p->grad[i];
      worst = std::max(worst, std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace hga::ad
