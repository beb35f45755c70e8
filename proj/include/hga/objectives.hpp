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
#include <span>
#include <string>

#include "json.hpp"

#include "hga/autodiff/graph.hpp"
#include "hga/models/encode.hpp"

namespace hga {

/// Loss weights. alpha stays at 0.25 unless explicitly overridden.
struct LossWeights {
  double lambda_u = 10.0;
  double lambda_i = 10.0;
  double lambda_h = 0.0;
  double lambda_c = 0.0;
  double alpha = 0.25;

  void validate() const {
    for (double v : {lambda_u, lambda_i, lambda_h, lambda_c, alpha}) {
      if (!std::isfinite(v) || v < 0) throw ConfigError("loss weights must be finite and >= 0");
    }
  }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"lambda_u", w.lambda_u}, {"lambda_i", w.lambda_i}, {"lambda_h", w.lambda_h},
       {"lambda_c", w.lambda_c}, {"alpha", w.alpha}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  LossWeights d;
  w.lambda_u = j.value("lambda_u", d.lambda_u);
  w.lambda_i = j.value("lambda_i", d.lambda_i);
  w.lambda_h = j.value("lambda_h", d.lambda_h);
  w.lambda_c = j.value("lambda_c", d.lambda_c);
  w.alpha = j.value("alpha", d.alpha);
}

/// Which distribution the categorical entropy penalty is taken over.
enum class EntropyMode {
  kMarginal,     ///< entropy of the batch-averaged assignment distribution
  kConditional,  ///< per-input entropy, averaged over the batch
};

inline std::string to_string(EntropyMode m) {
  return m == EntropyMode::kMarginal ? "marginal" : "conditional";
}
inline EntropyMode entropy_mode_from_string(const std::string& s) {
  if (s == "marginal") return EntropyMode::kMarginal;
  if (s == "conditional") return EntropyMode::kConditional;
  throw ConfigError("unknown entropy mode '" + s + "'");
}

/// Scalar parts of an objective plus the differentiable total.
/// total = -lambda_u * utility + lambda_i * mse + lambda_h * entropy
///         + lambda_c * complexity + codebook + alpha * commitment
template <class T>
struct LossBreakdown {
  double utility = 0;  ///< U = -cross-entropy
  double reconstruction_mse = 0;
  double entropy_term = 0;
  double complexity_term = 0;
  double codebook_term = 0;
  double commitment_term = 0;
  double total = 0;
  ad::Var<T> loss;

  double weighted_total(const LossWeights& w) const {
    return -w.lambda_u * utility + w.lambda_i * reconstruction_mse + w.lambda_h * entropy_term +
           w.lambda_c * complexity_term + codebook_term + w.alpha * commitment_term;
  }
};

namespace detail {

template <class T>
ad::Var<T> weighted(ad::Var<T> v, double w) {
  return ad::scale(v, static_cast<T>(w));
}

/// Sum over sub-representations of the entropy of the batch-averaged
/// distribution. probs rows are ordered (batch, sub-representation).
template <class T>
ad::Var<T> marginal_entropy(ad::Var<T> probs, std::size_t batch, std::size_t n) {
  const std::size_t c = probs.cols();
  auto per_input = ad::reshape(probs, {batch, n * c});
  auto avg = ad::reshape(ad::mean_rows(per_input), {n, c});
  return ad::scale(ad::categorical_entropy(avg), static_cast<T>(n));
}

/// Sum over sub-representations of per-input entropy, averaged over batch.
template <class T>
ad::Var<T> conditional_entropy(ad::Var<T> probs, std::size_t n) {
  return ad::scale(ad::categorical_entropy(probs), static_cast<T>(n));
}

/// Hard-assignment entropy within the batch, summed over sub-representations.
inline double hard_batch_entropy(std::span<const std::size_t> indices, std::size_t batch,
                                 std::size_t n, std::size_t c) {
  double h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> counts(c, 0.0);
    for (std::size_t b = 0; b < batch; ++b) counts[indices[b * n + i]] += 1.0;
    for (double k : counts) {
      if (k > 0) {
        const double p = k / static_cast<double>(batch);
        h -= p * std::log(p);
      }
    }
  }
  return h;
}

template <class T>
void add_clustering_terms(const EncodeOutput<T>& enc, std::size_t batch, LossBreakdown<T>& out,
                          ad::Var<T>& codebook, ad::Var<T>& commitment) {
  const T inv_b = T(1) / static_cast<T>(batch);
  // |sg[h_i] - zeta_i|^2 trains the codebook only; |h_i - sg[zeta_i]|^2 the encoder only.
  codebook = ad::scale(ad::sum_squares(ad::sub(ad::stop_gradient(*enc.chunks), *enc.selected)), inv_b);
  commitment = ad::scale(ad::sum_squares(ad::sub(*enc.chunks, ad::stop_gradient(*enc.selected))), inv_b);
  out.codebook_term = static_cast<double>(codebook.value().item());
  out.commitment_term = static_cast<double>(commitment.value().item());
}

template <class T>
ad::Var<T> supervised_part(ad::Var<T> x_hat, ad::Var<T> logits, ad::Var<T> x,
                           std::span<const int> y, const LossWeights& w, LossBreakdown<T>& out) {
  auto ce = ad::cross_entropy(logits, y);
  auto rec = ad::mse(x_hat, x);
  out.utility = -static_cast<double>(ce.value().item());
  out.reconstruction_mse = static_cast<double>(rec.value().item());
  return ad::add(weighted(ce, w.lambda_u), weighted(rec, w.lambda_i));
}

template <class T>
void finish(LossBreakdown<T>& out, ad::Var<T> total) {
  out.loss = total;
  out.total = static_cast<double>(total.value().item());
}

}  // namespace detail

/// VQ-VIB_C: utility, reconstruction, categorical entropy, KL to the uniform
/// prior over the codebook, and the two clustering terms.
template <class T>
LossBreakdown<T> loss_vqvib_c(const EncodeOutput<T>& enc, ad::Var<T> x_hat, ad::Var<T> logits,
                              ad::Var<T> x, std::span<const int> y, const LossWeights& w,
                              EntropyMode mode = EntropyMode::kMarginal) {
  if (!enc.probs || !enc.chunks || !enc.selected) {
    throw ContractError("loss_vqvib_c: encoding has no assignment probabilities");
  }
  LossBreakdown<T> out;
  const std::size_t batch = x.rows();
  const std::size_t n = enc.n;
  auto total = detail::supervised_part(x_hat, logits, x, y, w, out);

  auto entropy = mode == EntropyMode::kMarginal ? detail::marginal_entropy(*enc.probs, batch, n)
                                                : detail::conditional_entropy(*enc.probs, n);
  out.entropy_term = static_cast<double>(entropy.value().item());

  // E_x[ sum_i KL(P(zeta | h_i) || U(C)) ] = n ln C - E_x[ sum_i H(P(zeta | h_i)) ]
  auto& g = x.graph();
  const double log_c = std::log(static_cast<double>(enc.probs->cols()));
  auto complexity = ad::add(g.constant(Tensor<T>::scalar(static_cast<T>(n * log_c))),
                            ad::scale(detail::conditional_entropy(*enc.probs, n), T(-1)));
  out.complexity_term = static_cast<double>(complexity.value().item());

  ad::Var<T> codebook, commitment;
  detail::add_clustering_terms(enc, batch, out, codebook, commitment);

  total = ad::add(total, detail::weighted(entropy, w.lambda_h));
  total = ad::add(total, detail::weighted(complexity, w.lambda_c));
  total = ad::add(total, codebook);
  total = ad::add(total, detail::weighted(commitment, w.alpha));
  detail::finish(out, total);
  return out;
}

/// beta-VAE: utility, reconstruction and KL(N(mu, sigma) || N(0, 1)).
template <class T>
LossBreakdown<T> loss_beta_vae(const EncodeOutput<T>& enc, ad::Var<T> x_hat, ad::Var<T> logits,
                               ad::Var<T> x, std::span<const int> y, const LossWeights& w) {
  if (!enc.mu || !enc.log_sigma) throw ContractError("loss_beta_vae: encoding has no Gaussian parameters");
  LossBreakdown<T> out;
  auto total = detail::supervised_part(x_hat, logits, x, y, w, out);
  auto kl = ad::kl_unit_gaussian(*enc.mu, *enc.log_sigma);
  out.complexity_term = static_cast<double>(kl.value().item());
  total = ad::add(total, detail::weighted(kl, w.lambda_c));
  detail::finish(out, total);
  return out;
}

/// VQ-VIB_N: beta-VAE terms plus estimated codebook entropy and clustering.
/// The entropy estimate takes its value from the hard assignments in the
/// batch and its gradient from the soft (distance-softmax) marginal.
template <class T>
LossBreakdown<T> loss_vqvib_n(const EncodeOutput<T>& enc, ad::Var<T> x_hat, ad::Var<T> logits,
                              ad::Var<T> x, std::span<const int> y, const LossWeights& w) {
  if (!enc.mu || !enc.log_sigma || !enc.probs || !enc.chunks || !enc.selected) {
    throw ContractError("loss_vqvib_n: encoding is missing Gaussian or codebook outputs");
  }
  LossBreakdown<T> out;
  const std::size_t batch = x.rows();
  auto& g = x.graph();
  auto total = detail::supervised_part(x_hat, logits, x, y, w, out);

  auto soft = detail::marginal_entropy(*enc.probs, batch, enc.n);
  const double hard = detail::hard_batch_entropy(enc.indices, batch, enc.n, enc.probs->cols());
  auto estimate = ad::add(ad::sub(soft, ad::stop_gradient(soft)), g.constant(Tensor<T>::scalar(static_cast<T>(hard))));
  out.entropy_term = static_cast<double>(estimate.value().item());

  auto kl = ad::kl_unit_gaussian(*enc.mu, *enc.log_sigma);
  out.complexity_term = static_cast<double>(kl.value().item());

  ad::Var<T> codebook, commitment;
  detail::add_clustering_terms(enc, batch, out, codebook, commitment);

  total = ad::add(total, detail::weighted(estimate, w.lambda_h));
  total = ad::add(total, detail::weighted(kl, w.lambda_c));
  total = ad::add(total, codebook);
  total = ad::add(total, detail::weighted(commitment, w.alpha));
  detail::finish(out, total);
  return out;
}

template <class T>
LossBreakdown<T> compute_loss(HeadKind head, const EncodeOutput<T>& enc, ad::Var<T> x_hat,
                              ad::Var<T> logits, ad::Var<T> x, std::span<const int> y,
                              const LossWeights& w, EntropyMode mode = EntropyMode::kMarginal) {
  switch (head) {
    case HeadKind::kBetaVae: return loss_beta_vae(enc, x_hat, logits, x, y, w);
    case HeadKind::kVqvibN: return loss_vqvib_n(enc, x_hat, logits, x, y, w);
    case HeadKind::kVqvibC: return loss_vqvib_c(enc, x_hat, logits, x, y, w, mode);
  }
  throw ConfigError("unknown head");
}

}  // namespace hga
