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

#include "hga/pretrain.hpp"

namespace hga::test {

/// Overlapping 4-dim hierarchy where entropy annealing visibly compresses.
inline HierarchySpec compressible_spec() {
  HierarchySpec s;
  s.dim = 4;
  s.sigma = 1.0;
  s.leaf_spread = 1.5;
  s.coarse_spread = 4.0;
  return s;
}

inline TrainConfig synthetic_config(HeadKind head = HeadKind::kVqvibC) {
  TrainConfig c;
  c.encoder.head = head;
  c.encoder.input_dim = 4;
  c.encoder.latent_dim = 4;
  c.encoder.n = 1;
  c.encoder.codebook_size = 100;
  c.encoder.extractor_widths = {32};
  c.encoder.decoder_widths = {32};
  c.encoder.predictor_hidden = 32;
  c.encoder.num_classes = 9;
  c.encoder.codebook_init_std = 1.0;
  c.schedule.knob = head == HeadKind::kVqvibC ? AnnealKnob::kLambdaH : AnnealKnob::kLambdaC;
  c.schedule.initial = head == HeadKind::kVqvibC ? 0.001 : 0.01;
  c.schedule.increment = 0.5;
  c.schedule.warmup_epochs = 30;
  c.schedule.max_epochs = 150;
  c.warmup_accuracy_floor = 0.5;
  c.dataset.kind = "synthetic";
  c.dataset.synthetic = compressible_spec();
  c.dataset.synthetic_seed = 7;
  return c;
}

}  // namespace hga::test
