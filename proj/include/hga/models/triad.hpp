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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hga/autodiff/graph.hpp"
#include "hga/autodiff/tensor.hpp"
#include "hga/error.hpp"
#include "hga/rng.hpp"

namespace hga {

enum class HeadKind { kBetaVae, kVqvibN, kVqvibC };

inline std::string to_string(HeadKind h) {
  switch (h) {
    case HeadKind::kBetaVae: return "beta_vae";
    case HeadKind::kVqvibN: return "vqvib_n";
    case HeadKind::kVqvibC: return "vqvib_c";
  }
  return "?";
}

inline HeadKind head_from_string(const std::string& s) {
  if (s == "beta_vae") return HeadKind::kBetaVae;
  if (s == "vqvib_n") return HeadKind::kVqvibN;
  if (s == "vqvib_c") return HeadKind::kVqvibC;
  throw ConfigError("unknown head kind '" + s + "'");
}

inline bool is_discrete(HeadKind h) { return h != HeadKind::kBetaVae; }

struct EncoderConfig {
  HeadKind head = HeadKind::kVqvibC;
  std::size_t input_dim = 784;
  std::size_t latent_dim = 32;
  std::size_t n = 1;                ///< sub-representations per latent
  std::size_t codebook_size = 1000; ///< C
  std::vector<std::size_t> extractor_widths{256};
  std::vector<std::size_t> decoder_widths{256};
  std::size_t predictor_hidden = 128;
  std::size_t num_classes = 10;
  double codebook_init_std = 1.0;
  double tau = 1.0;  ///< Gumbel-softmax temperature

  std::size_t sub_dim() const { return latent_dim / n; }

  void validate() const {
    if (input_dim == 0 || latent_dim == 0 || num_classes < 2) {
      throw ConfigError("encoder config: input_dim, latent_dim must be > 0 and num_classes >= 2");
    }
    if (is_discrete(head)) {
      if (n == 0 || latent_dim % n != 0) {
        throw ConfigError("encoder config: latent_dim " + std::to_string(latent_dim) +
                          " not divisible by n=" + std::to_string(n));
      }
      if (codebook_size < 1) throw ConfigError("encoder config: codebook size must be >= 1");
    }
    if (!(tau > 0)) throw ConfigError("encoder config: tau must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"head", to_string(c.head)},
       {"input_dim", c.input_dim},
       {"latent_dim", c.latent_dim},
       {"n", c.n},
       {"codebook_size", c.codebook_size},
       {"extractor_widths", c.extractor_widths},
       {"decoder_widths", c.decoder_widths},
       {"predictor_hidden", c.predictor_hidden},
       {"num_classes", c.num_classes},
       {"codebook_init_std", c.codebook_init_std},
       {"tau", c.tau}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.head = head_from_string(j.value("head", to_string(d.head)));
  c.input_dim = j.value("input_dim", d.input_dim);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.n = j.value("n", d.n);
  c.codebook_size = j.value("codebook_size", d.codebook_size);
  c.extractor_widths = j.value("extractor_widths", d.extractor_widths);
  c.decoder_widths = j.value("decoder_widths", d.decoder_widths);
  c.predictor_hidden = j.value("predictor_hidden", d.predictor_hidden);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.codebook_init_std = j.value("codebook_init_std", d.codebook_init_std);
  c.tau = j.value("tau", d.tau);
}

/// Fully connected layer, W is [in x out].
template <class T>
struct Linear {
  Parameter<T> w;
  Parameter<T> b;

  Linear() = default;
  Linear(Parameter<T> w_, Parameter<T> b_) : w(std::move(w_)), b(std::move(b_)) {}
  Linear(std::size_t in, std::size_t out, CounterRng& rng)
      : w(Tensor<T>({in, out})), b(Tensor<T>({out})) {
    // Kaiming-uniform style fan-in bound, as in common framework defaults.
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.value.storage()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    for (auto& v : b.value.storage()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }

  std::size_t in_dim() const { return w.value.shape()[0]; }
  std::size_t out_dim() const { return w.value.shape()[1]; }

  ad::Var<T> operator()(ad::Var<T> x) const {
    auto& g = x.graph();
    return ad::affine(x, g.param(const_cast<Parameter<T>&>(w)), g.param(const_cast<Parameter<T>&>(b)));
  }
};

/// Stack of Linear layers with ReLU between them (none after the last).
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;

  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, CounterRng& rng) {
    std::size_t prev = in;
    for (std::size_t h : hidden) {
      layers.emplace_back(prev, h, rng);
      prev = h;
    }
    layers.emplace_back(prev, out, rng);
  }

  ad::Var<T> operator()(ad::Var<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
  }

  void collect(const std::string& prefix, std::vector<std::pair<std::string, Parameter<T>*>>& out) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.emplace_back(prefix + "." + std::to_string(i) + ".w", &layers[i].w);
      out.emplace_back(prefix + "." + std::to_string(i) + ".b", &layers[i].b);
    }
  }
};

/// Feature extractor F, encoder head E, decoder D and predictor P.
template <class T>
class Triad {
 public:
  using NamedParams = std::vector<std::pair<std::string, Parameter<T>*>>;

  Triad() = default;

  /// Initializes every weight from `seed`. Draw order: extractor, Gaussian
  /// heads, codebook, decoder, predictor.
  Triad(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    CounterRng rng(seed);
    const std::size_t z = config_.latent_dim;
    extractor_ = Mlp<T>(config_.input_dim, config_.extractor_widths, z, rng);
    if (config_.head != HeadKind::kVqvibC) {
      mu_head_ = Linear<T>(z, z, rng);
      log_sigma_head_ = Linear<T>(z, z, rng);
    }
    if (is_discrete(config_.head)) {
      codebook_ = Parameter<T>(Tensor<T>({config_.codebook_size, config_.sub_dim()}));
      for (auto& v : codebook_.value.storage()) {
        v = static_cast<T>(rng.normal() * config_.codebook_init_std);
      }
    }
    decoder_ = Mlp<T>(z, config_.decoder_widths, config_.input_dim, rng);
    predictor_ = Mlp<T>(z, {config_.predictor_hidden}, config_.num_classes, rng);
  }

  const EncoderConfig& config() const { return config_; }
  HeadKind head() const { return config_.head; }

  const Mlp<T>& extractor() const { return extractor_; }
  const Linear<T>& mu_head() const { return mu_head_; }
  const Linear<T>& log_sigma_head() const { return log_sigma_head_; }
  const Parameter<T>& codebook() const { return codebook_; }
  Parameter<T>& codebook() { return codebook_; }
  const Mlp<T>& decoder() const { return decoder_; }
  const Mlp<T>& predictor() const { return predictor_; }

  /// All parameters in a stable order with stable names.
  NamedParams named_parameters() {
    NamedParams out;
    extractor_.collect("extractor", out);
    if (config_.head != HeadKind::kVqvibC) {
      out.emplace_back("mu.w", &mu_head_.w);
      out.emplace_back("mu.b", &mu_head_.b);
      out.emplace_back("log_sigma.w", &log_sigma_head_.w);
      out.emplace_back("log_sigma.b", &log_sigma_head_.b);
    }
    if (is_discrete(config_.head)) out.emplace_back("codebook", &codebook_);
    decoder_.collect("decoder", out);
    predictor_.collect("predictor", out);
    return out;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  /// Copy with every parameter converted to scalar type U.
  template <class U>
  Triad<U> cast() const {
    Triad<U> out;
    out.config_ = config_;
    auto conv_mlp = [](const Mlp<T>& m) {
      Mlp<U> r;
      for (const auto& l : m.layers) r.layers.push_back(Linear<U>{l.w.template cast<U>(), l.b.template cast<U>()});
      return r;
    };
    out.extractor_ = conv_mlp(extractor_);
    out.mu_head_ = Linear<U>{mu_head_.w.template cast<U>(), mu_head_.b.template cast<U>()};
    out.log_sigma_head_ = Linear<U>{log_sigma_head_.w.template cast<U>(), log_sigma_head_.b.template cast<U>()};
    out.codebook_ = codebook_.template cast<U>();
    out.decoder_ = conv_mlp(decoder_);
    out.predictor_ = conv_mlp(predictor_);
    return out;
  }

  /// Replace the predictor (e.g. after changing the number of classes).
  void set_predictor(Mlp<T> p) { predictor_ = std::move(p); }

 private:
  template <class U>
  friend class Triad;

  EncoderConfig config_;
  Mlp<T> extractor_;
  Linear<T> mu_head_;
  Linear<T> log_sigma_head_;
  Parameter<T> codebook_;
  Mlp<T> decoder_;
  Mlp<T> predictor_;
};

}  // namespace hga
