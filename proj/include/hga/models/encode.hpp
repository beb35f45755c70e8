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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hga/autodiff/graph.hpp"
#include "hga/models/triad.hpp"

namespace hga {

/// How stochastic encoders draw their latent.
enum class SampleMode {
  kTrain,  ///< sampling on; hard straight-through quantization
  kEval,   ///< deterministic: argmax assignment / mean of the Gaussian
  kSoft,   ///< sampling on, but relaxed (differentiable) quantization
};

template <class T>
struct EncodeOutput {
  ad::Var<T> z;  ///< [B x Z]
  ad::Var<T> h;  ///< [B x Z] pre-quantization hidden (vqvib_n: the Gaussian sample)
  /// [(B*n) x C] assignment distributions. vqvib_c: P(zeta | h_i);
  /// vqvib_n: softmax(-|s_i - zeta|^2) used as the entropy surrogate.
  std::optional<ad::Var<T>> probs;
  std::optional<ad::Var<T>> mu;
  std::optional<ad::Var<T>> log_sigma;
  /// [(B*n) x Z/n] chunked hidden and the codebook entries assigned to
  /// each chunk (assignment itself carries no gradient).
  std::optional<ad::Var<T>> chunks;
  std::optional<ad::Var<T>> selected;
  std::vector<std::size_t> indices;  ///< hard assignment per chunk, row-major
  std::size_t n = 1;
};

template <class T>
EncodeOutput<T> encode_beta_vae(ad::Var<T> x, const Triad<T>& triad, CounterRng* rng,
                                SampleMode mode = SampleMode::kTrain) {
  if (x.value().rank() != 2 || x.cols() != triad.config().input_dim) {
    throw DimensionError("encode: input " + shape_str(x.shape()) + " for input_dim " +
                         std::to_string(triad.config().input_dim));
  }
  EncodeOutput<T> out;
  out.h = triad.extractor()(x);
  out.mu = triad.mu_head()(out.h);
  out.log_sigma = triad.log_sigma_head()(out.h);
  out.z = ad::gaussian_reparam(*out.mu, *out.log_sigma, mode == SampleMode::kEval ? nullptr : rng);
  return out;
}

template <class T>
EncodeOutput<T> encode_vqvib_c(ad::Var<T> x, const Triad<T>& triad, CounterRng* rng,
                               SampleMode mode = SampleMode::kTrain) {
  const auto& cfg = triad.config();
  if (x.value().rank() != 2 || x.cols() != cfg.input_dim) {
    throw DimensionError("encode: input " + shape_str(x.shape()) + " for input_dim " +
                         std::to_string(cfg.input_dim));
  }
  auto& g = x.graph();
  const std::size_t b = x.rows();
  EncodeOutput<T> out;
  out.n = cfg.n;
  out.h = triad.extractor()(x);
  auto chunks = ad::reshape(out.h, {b * cfg.n, cfg.sub_dim()});
  auto codebook = g.param(const_cast<Parameter<T>&>(triad.codebook()));
  // P(z_i = zeta_j | h_i) proportional to exp(-|h_i - zeta_j|^2).
  auto logits = ad::scale(ad::sq_dist(chunks, codebook), T(-1));
  out.probs = ad::softmax(logits);
  ad::Var<T> weights;
  if (mode == SampleMode::kEval) {
    weights = g.constant(ad::one_hot_rows<T>(ad::argmax_rows(out.probs->value()), cfg.codebook_size));
  } else {
    if (rng == nullptr) throw ContractError("encode_vqvib_c: sampling needs an rng");
    auto sample = ad::gumbel_softmax_sample(logits, static_cast<T>(cfg.tau), *rng);
    weights = mode == SampleMode::kSoft ? sample.soft : sample.one_hot;
  }
  out.indices = ad::argmax_rows(weights.value());
  auto quantized = ad::matmul(weights, codebook);
  out.z = ad::reshape(quantized, {b, cfg.latent_dim});
  out.chunks = chunks;
  out.selected = ad::matmul(ad::stop_gradient(weights), codebook);
  return out;
}

template <class T>
EncodeOutput<T> encode_vqvib_n(ad::Var<T> x, const Triad<T>& triad, CounterRng* rng,
                               SampleMode mode = SampleMode::kTrain) {
  const auto& cfg = triad.config();
  auto& g = x.graph();
  EncodeOutput<T> out = encode_beta_vae(x, triad, rng, mode);
  const std::size_t b = x.rows();
  out.n = cfg.n;
  // The continuous sample is what gets quantized.
  out.h = out.z;
  auto chunks = ad::reshape(out.h, {b * cfg.n, cfg.sub_dim()});
  auto codebook = g.param(const_cast<Parameter<T>&>(triad.codebook()));
  auto dist = ad::sq_dist(chunks, codebook);
  out.probs = ad::softmax(ad::scale(dist, T(-1)));
  out.indices = ad::argmin_rows(dist.value());
  auto nearest = ad::matmul(g.constant(ad::one_hot_rows<T>(out.indices, cfg.codebook_size)), codebook);
  ad::Var<T> quantized;
  if (mode == SampleMode::kSoft) {
    quantized = ad::matmul(*out.probs, codebook);
  } else {
    // Straight-through: forward value is the codebook entry, gradient is identity.
    quantized = ad::add(chunks, ad::stop_gradient(ad::sub(nearest, chunks)));
  }
  out.z = ad::reshape(quantized, {b, cfg.latent_dim});
  out.chunks = chunks;
  out.selected = nearest;
  return out;
}

template <class T>
EncodeOutput<T> encode(ad::Var<T> x, const Triad<T>& triad, CounterRng* rng,
                       SampleMode mode = SampleMode::kTrain) {
  switch (triad.head()) {
    case HeadKind::kBetaVae: return encode_beta_vae(x, triad, rng, mode);
    case HeadKind::kVqvibN: return encode_vqvib_n(x, triad, rng, mode);
    case HeadKind::kVqvibC: return encode_vqvib_c(x, triad, rng, mode);
  }
  throw ConfigError("unknown head");
}

/// Reconstruction x_hat from a latent.
template <class T>
ad::Var<T> decode(ad::Var<T> z, const Triad<T>& triad) {
  if (z.cols() != triad.config().latent_dim) throw DimensionError("decode: latent " + shape_str(z.shape()));
  return triad.decoder()(z);
}

/// Predictor logits; softmax of these is the class distribution.
template <class T>
ad::Var<T> predict_logits(ad::Var<T> z, const Triad<T>& triad) {
  if (z.cols() != triad.config().latent_dim) throw DimensionError("predict: latent " + shape_str(z.shape()));
  return triad.predictor()(z);
}

template <class T>
ad::Var<T> predict(ad::Var<T> z, const Triad<T>& triad) {
  return ad::softmax(predict_logits(z, triad));
}

/// Deterministic (eval-mode) encodings of a whole feature matrix.
template <class T>
struct Encodings {
  Tensor<T> z;                       ///< [N x Z]
  Tensor<T> h;                       ///< [N x Z]
  std::vector<std::size_t> indices;  ///< [N * n] (discrete heads only)
};

template <class T>
Encodings<T> encode_all(const Triad<T>& triad, const Tensor<T>& features, std::size_t batch = 512) {
  const std::size_t n_rows = features.rows();
  const std::size_t zdim = triad.config().latent_dim;
  Encodings<T> out{Tensor<T>({n_rows, zdim}), Tensor<T>({n_rows, zdim}), {}};
  std::vector<std::size_t> idx(batch);
  for (std::size_t start = 0; start < n_rows; start += batch) {
    const std::size_t end = std::min(n_rows, start + batch);
    idx.resize(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    ad::Graph<T> g;
    auto enc = encode(g.constant(features.rows_slice(idx)), triad, nullptr, SampleMode::kEval);
    const auto& zv = enc.z.value();
    const auto& hv = enc.h.value();
    std::copy(zv.storage().begin(), zv.storage().end(), out.z.storage().begin() + start * zdim);
    std::copy(hv.storage().begin(), hv.storage().end(), out.h.storage().begin() + start * zdim);
    out.indices.insert(out.indices.end(), enc.indices.begin(), enc.indices.end());
  }
  return out;
}

/// Stochastic encodings (training-mode sampling), one stream per 500 rows.
template <class T>
Tensor<T> encode_sampled(const Triad<T>& triad, const Tensor<T>& features, const CounterRng& rng) {
  constexpr std::size_t kBatch = 500;
  const std::size_t zdim = triad.config().latent_dim;
  Tensor<T> out({features.rows(), zdim});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < features.rows(); start += kBatch) {
    const std::size_t end = std::min(features.rows(), start + kBatch);
    idx.resize(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    CounterRng r = rng.split(start / kBatch);
    ad::Graph<T> g;
    const auto enc = encode(g.constant(features.rows_slice(idx)), triad, &r, SampleMode::kTrain);
    const auto& zv = enc.z.value();
    std::copy(zv.storage().begin(), zv.storage().end(), out.storage().begin() + start * zdim);
  }
  return out;
}

inline constexpr std::uint64_t kUsageSeed = 0x75736167;

/// Hard assignments that define prototype use: argmax for VQ-VIB_C, and for
/// VQ-VIB_N the nearest code to a sampled latent (fixed seed per 500 rows).
template <class T>
std::vector<std::size_t> usage_indices(const Triad<T>& triad, const Tensor<T>& features) {
  if (triad.head() != HeadKind::kVqvibN) return encode_all(triad, features).indices;
  constexpr std::size_t kBatch = 500;
  std::vector<std::size_t> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < features.rows(); start += kBatch) {
    const std::size_t end = std::min(features.rows(), start + kBatch);
    idx.resize(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    CounterRng rng = CounterRng(kUsageSeed).split(start / kBatch);
    ad::Graph<T> g;
    const auto enc = encode(g.constant(features.rows_slice(idx)), triad, &rng, SampleMode::kTrain);
    out.insert(out.end(), enc.indices.begin(), enc.indices.end());
  }
  return out;
}

struct CodebookUsage {
  std::vector<double> frequencies;  ///< per codebook entry, sums to 1
  std::size_t effective_count = 0;  ///< entries with frequency > threshold
};

/// Empirical hard-assignment frequencies over a dataset.
template <class T>
CodebookUsage effective_codebook_usage(const Triad<T>& triad, const Tensor<T>& features,
                                       double threshold = 0.01) {
  if (!is_discrete(triad.head())) {
    throw UnsupportedHeadError("effective_codebook_usage: beta_vae has no codebook");
  }
  const auto indices = usage_indices(triad, features);
  CodebookUsage usage;
  usage.frequencies.assign(triad.config().codebook_size, 0.0);
  for (auto i : indices) usage.frequencies[i] += 1.0;
  const double total = static_cast<double>(indices.size());
  for (auto& f : usage.frequencies) {
    f /= total;
    if (f > threshold) ++usage.effective_count;
  }
  return usage;
}

}  // namespace hga
