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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "hga/autodiff/gradcheck.hpp"
#include "hga/models/encode.hpp"
#include "hga/objectives.hpp"

namespace {

using hga::EncoderConfig;
using hga::HeadKind;
using hga::LossWeights;
using hga::SampleMode;
using hga::Triad;
using hga::ad::Graph;
using Td = hga::Tensor<double>;

EncoderConfig small(HeadKind head, std::size_t in, std::size_t z, std::size_t n, std::size_t c) {
  EncoderConfig cfg;
  cfg.head = head;
  cfg.input_dim = in;
  cfg.latent_dim = z;
  cfg.n = n;
  cfg.codebook_size = c;
  cfg.extractor_widths = {};
  cfg.decoder_widths = {3};
  cfg.predictor_hidden = 4;
  cfg.num_classes = 3;
  return cfg;
}

// Zeroes every weight matrix of the named stack and sets the last bias.
void pin_stack(Triad<double>& m, const std::string& prefix, std::size_t layers, const std::vector<double>& last_bias) {
  for (auto& [name, p] : m.named_parameters()) {
    if (name.rfind(prefix + ".", 0) != 0) continue;
    p->value = Td(p->value.shape(), 0.0);
    if (name == prefix + "." + std::to_string(layers - 1) + ".b") p->value = Td({last_bias.size()}, last_bias);
  }
}

void pin_named(Triad<double>& m, const std::string& target, Td value) {
  for (auto& [name, p] : m.named_parameters()) {
    if (name == target) p->value = value;
  }
}

struct Run {
  hga::EncodeOutput<double> enc;
  hga::LossBreakdown<double> loss;
};

Run run(Graph<double>& g, const Triad<double>& m, const Td& x, const std::vector<int>& y, const LossWeights& w,
        SampleMode mode, hga::CounterRng* rng, hga::EntropyMode em = hga::EntropyMode::kMarginal) {
  auto xv = g.constant(x);
  auto enc = hga::encode(xv, m, rng, mode);
  auto loss = hga::compute_loss(m.head(), enc, hga::decode(enc.z, m), hga::predict_logits(enc.z, m), xv,
                                std::span<const int>(y), w, em);
  return {enc, loss};
}

Td random_input(std::size_t b, std::size_t d, std::uint64_t seed) {
  hga::CounterRng rng(seed);
  Td x({b, d});
  for (auto& v : x.storage()) v = rng.normal();
  return x;
}

TEST(LossWeights, AlphaDefaultAndValidation) {
  LossWeights w;
  EXPECT_DOUBLE_EQ(w.alpha, 0.25);
  w.lambda_h = -1;
  EXPECT_THROW(w.validate(), hga::ConfigError);
  w.lambda_h = NAN;
  EXPECT_THROW(w.validate(), hga::ConfigError);
  nlohmann::json j = LossWeights{};
  EXPECT_EQ(nlohmann::json(j.get<LossWeights>()), j);
}

TEST(VqvibCLoss, AllTermsVanish) {
  Triad<double> m(small(HeadKind::kVqvibC, 2, 2, 1, 1), 1);
  pin_stack(m, "extractor", 1, {0.3, -0.2});
  m.codebook().value = Td::matrix({{0.3, -0.2}});
  pin_stack(m, "decoder", 2, {0.5, 0.25});
  pin_stack(m, "predictor", 2, {60.0, 0.0, 0.0});
  Graph<double> g;
  hga::CounterRng rng(0);
  auto r = run(g, m, Td::matrix({{0.5, 0.25}}), {0}, LossWeights{}, SampleMode::kTrain, &rng);
  EXPECT_NEAR(r.loss.total, 0.0, 1e-12);
}

TEST(VqvibCLoss, KlToUniformIdentity) {
  hga::CounterRng rng(5);
  for (int t = 0; t < 20; ++t) {
    Triad<double> m(small(HeadKind::kVqvibC, 3, 4, 2, 6), rng.next_u64());
    Graph<double> g;
    auto r = run(g, m, random_input(5, 3, t), {0, 1, 2, 0, 1}, LossWeights{}, SampleMode::kEval, nullptr,
                 hga::EntropyMode::kConditional);
    // With per-input entropy, KL(P||U) summed over chunks is n ln C - H.
    EXPECT_NEAR(r.loss.complexity_term, 2 * std::log(6.0) - r.loss.entropy_term, 1e-6);
  }
}

TEST(VqvibCLoss, HandComputedCase) {
  Triad<double> m(small(HeadKind::kVqvibC, 2, 2, 1, 2), 1);
  pin_stack(m, "extractor", 1, {0.5, 0.0});
  m.codebook().value = Td::matrix({{0, 0}, {1, 1}});
  pin_stack(m, "decoder", 2, {0.2, 0.4});
  pin_stack(m, "predictor", 2, {1.0, 0.0, 0.0});
  LossWeights w{1, 1, 1, 1, 1};
  Graph<double> g;
  auto r = run(g, m, Td::matrix({{0.0, 1.0}}), {0}, w, SampleMode::kEval, nullptr);
  const double e = std::exp(1.0);
  const double ce = -std::log(e / (e + 2));
  const double p0 = 1 / (1 + std::exp(-1.0)), p1 = 1 - p0;
  const double h = -(p0 * std::log(p0) + p1 * std::log(p1));
  const double mse = (0.04 + 0.36) / 2;
  EXPECT_NEAR(r.loss.utility, -ce, 1e-12);
  EXPECT_NEAR(r.loss.reconstruction_mse, mse, 1e-12);
  EXPECT_NEAR(r.loss.entropy_term, h, 1e-12);
  EXPECT_NEAR(r.loss.complexity_term, std::log(2.0) - h, 1e-12);
  EXPECT_NEAR(r.loss.codebook_term, 0.25, 1e-12);
  EXPECT_NEAR(r.loss.commitment_term, 0.25, 1e-12);
  EXPECT_NEAR(r.loss.total, ce + mse + h + (std::log(2.0) - h) + 0.25 + 0.25, 1e-12);
}

TEST(VqvibCLoss, MissingProbsIsContractError) {
  Triad<double> m(small(HeadKind::kBetaVae, 2, 2, 1, 2), 1);
  Graph<double> g;
  auto xv = g.constant(Td::matrix({{0.0, 1.0}}));
  auto enc = hga::encode(xv, m, nullptr, SampleMode::kEval);
  const std::vector<int> y{0};
  EXPECT_THROW(hga::loss_vqvib_c(enc, hga::decode(enc.z, m), hga::predict_logits(enc.z, m), xv, y, LossWeights{}),
               hga::ContractError);
  EXPECT_THROW(hga::loss_vqvib_n(enc, hga::decode(enc.z, m), hga::predict_logits(enc.z, m), xv, y, LossWeights{}),
               hga::ContractError);
}

TEST(BetaVaeLoss, ComplexityClosedForms) {
  Triad<double> m(small(HeadKind::kBetaVae, 2, 1, 1, 2), 1);
  pin_stack(m, "extractor", 1, {0.0});
  pin_named(m, "mu.w", Td({1, 1}, 0.0));
  pin_named(m, "log_sigma.w", Td({1, 1}, 0.0));
  pin_named(m, "log_sigma.b", Td::vector({0.0}));
  pin_named(m, "mu.b", Td::vector({0.0}));
  Graph<double> g;
  auto r0 = run(g, m, Td::matrix({{0.0, 1.0}}), {1}, LossWeights{}, SampleMode::kEval, nullptr);
  EXPECT_DOUBLE_EQ(r0.loss.complexity_term, 0.0);
  pin_named(m, "mu.b", Td::vector({1.0}));
  auto r1 = run(g, m, Td::matrix({{0.0, 1.0}}), {1}, LossWeights{}, SampleMode::kEval, nullptr);
  EXPECT_NEAR(r1.loss.complexity_term, 0.5, 1e-12);
  EXPECT_EQ(r1.loss.entropy_term, 0.0);
  EXPECT_EQ(r1.loss.codebook_term, 0.0);
}

TEST(BetaVaeLoss, ZeroLambdaCIsSupervisedAutoencoder) {
  Triad<double> m(small(HeadKind::kBetaVae, 3, 2, 1, 2), 4);
  Graph<double> g;
  auto r = run(g, m, random_input(4, 3, 1), {0, 1, 2, 0}, LossWeights{}, SampleMode::kEval, nullptr);
  EXPECT_NEAR(r.loss.total, -10 * r.loss.utility + 10 * r.loss.reconstruction_mse, 1e-12);
}

TEST(VqvibNLoss, AllTermsVanishWithoutComplexity) {
  Triad<double> m(small(HeadKind::kVqvibN, 2, 1, 1, 2), 1);
  pin_named(m, "mu.w", Td({1, 1}, 0.0));
  pin_named(m, "log_sigma.w", Td({1, 1}, 0.0));
  pin_named(m, "mu.b", Td::vector({2.0}));
  pin_named(m, "log_sigma.b", Td::vector({-60.0}));
  m.codebook().value = Td::matrix({{2.0}, {-3.0}});
  pin_stack(m, "decoder", 2, {0.5, 0.25});
  pin_stack(m, "predictor", 2, {0.0, 60.0, 0.0});
  LossWeights w;
  w.lambda_h = 0;
  w.lambda_c = 0;
  hga::CounterRng rng(1);
  Graph<double> g;
  auto r = run(g, m, Td::matrix({{0.5, 0.25}, {0.5, 0.25}}), {1, 1}, w, SampleMode::kTrain, &rng);
  EXPECT_NEAR(r.loss.total, 0.0, 1e-10);
  // Both rows land on entry 0: the batch estimate is zero.
  EXPECT_EQ(r.enc.indices, (std::vector<std::size_t>{0, 0}));
  EXPECT_NEAR(r.loss.entropy_term, 0.0, 1e-12);
}

TEST(VqvibNLoss, ComplexityMatchesBetaVae) {
  auto cfg = small(HeadKind::kVqvibN, 3, 2, 1, 3);
  Triad<double> n(cfg, 7);
  cfg.head = HeadKind::kBetaVae;
  Triad<double> b(cfg, 7);
  const Td x = random_input(4, 3, 2);
  Graph<double> g;
  auto rn = run(g, n, x, {0, 1, 2, 0}, LossWeights{}, SampleMode::kEval, nullptr);
  auto rb = run(g, b, x, {0, 1, 2, 0}, LossWeights{}, SampleMode::kEval, nullptr);
  EXPECT_DOUBLE_EQ(rn.loss.complexity_term, rb.loss.complexity_term);
}

TEST(VqvibNLoss, EntropyEstimateTakesHardValue) {
  Triad<double> m(small(HeadKind::kVqvibN, 2, 1, 1, 2), 1);
  m.codebook().value = Td::matrix({{-100.0}, {100.0}});
  pin_named(m, "mu.w", Td::matrix({{50.0}}));
  pin_stack(m, "extractor", 1, {0.0});
  for (auto& [name, p] : m.named_parameters()) {
    if (name == "extractor.0.w") p->value = Td::matrix({{1.0}, {0.0}});
  }
  pin_named(m, "mu.b", Td::vector({0.0}));
  Graph<double> g;
  auto r = run(g, m, Td::matrix({{-1.0, 0.0}, {1.0, 0.0}}), {0, 1}, LossWeights{}, SampleMode::kEval, nullptr);
  EXPECT_EQ(r.enc.indices, (std::vector<std::size_t>{0, 1}));
  EXPECT_NEAR(r.loss.entropy_term, std::log(2.0), 1e-12);
}

TEST(Losses, TotalIsWeightedSumOfParts) {
  for (auto head : {HeadKind::kBetaVae, HeadKind::kVqvibN, HeadKind::kVqvibC}) {
    Triad<double> m(small(head, 4, 4, 2, 5), 3);
    LossWeights w{2.0, 3.0, 0.7, 0.4, 0.25};
    hga::CounterRng rng(8);
    Graph<double> g;
    auto r = run(g, m, random_input(6, 4, 3), {0, 1, 2, 2, 1, 0}, w, SampleMode::kTrain, &rng);
    EXPECT_NEAR(r.loss.total, r.loss.weighted_total(w), 1e-9) << hga::to_string(head);
  }
}

TEST(Losses, DoublingLambdaIDoublesReconstruction) {
  for (auto head : {HeadKind::kBetaVae, HeadKind::kVqvibN, HeadKind::kVqvibC}) {
    Triad<double> m(small(head, 4, 4, 2, 5), 3);
    LossWeights w{1.0, 1.5, 0.3, 0.2, 0.25};
    LossWeights w2 = w;
    w2.lambda_i *= 2;
    Graph<double> g;
    const Td x = random_input(6, 4, 3);
    auto a = run(g, m, x, {0, 1, 2, 2, 1, 0}, w, SampleMode::kEval, nullptr);
    auto b = run(g, m, x, {0, 1, 2, 2, 1, 0}, w2, SampleMode::kEval, nullptr);
    EXPECT_NEAR(b.loss.total - a.loss.total, w.lambda_i * a.loss.reconstruction_mse, 1e-12);
  }
}

// Only the codebook term is active: the codebook moves, the extractor does not.
TEST(StopGradient, ClusteringTermsSeparate) {
  for (auto head : {HeadKind::kVqvibN, HeadKind::kVqvibC}) {
    Triad<double> m(small(head, 3, 4, 2, 5), 2);
    const Td x = random_input(4, 3, 5);
    auto grads = [&](double alpha) {
      LossWeights w{0, 0, 0, 0, alpha};
      for (auto* p : m.parameters()) p->zero_grad();
      hga::CounterRng rng(1);
      Graph<double> g;
      auto r = run(g, m, x, {0, 1, 2, 0}, w, SampleMode::kTrain, &rng);
      g.backward(r.loss.loss);
      std::map<std::string, Td> out;
      for (auto& [name, p] : m.named_parameters()) out[name] = p->grad;
      return out;
    };
    auto only_codebook = grads(0.0);
    auto with_commit = grads(1.0);
    auto norm = [](const Td& t) {
      double s = 0;
      for (double v : t.data()) s += v * v;
      return s;
    };
    EXPECT_GT(norm(only_codebook["codebook"]), 0.0);
    EXPECT_EQ(norm(only_codebook["extractor.0.w"]), 0.0);
    // Adding the commitment term changes encoder gradients but not the codebook's.
    EXPECT_EQ(with_commit["codebook"], only_codebook["codebook"]);
    const std::string enc_name = head == HeadKind::kVqvibC ? "extractor.0.w" : "mu.w";
    EXPECT_GT(norm(with_commit[enc_name]), 0.0);
  }
}

// Full objectives on a 4-sample batch, Z=8, C=5, soft sampling path, 64-bit.
class FullLossGradient : public ::testing::TestWithParam<std::tuple<HeadKind, std::size_t>> {};

TEST_P(FullLossGradient, MatchesFiniteDifferences) {
  const auto [head, n] = GetParam();
  auto cfg = small(head, 6, 8, n, 5);
  cfg.extractor_widths = {7};
  cfg.codebook_init_std = 0.5;
  Triad<double> m(cfg, 13);
  const Td x = random_input(4, 6, 21);
  const std::vector<int> y{0, 2, 1, 2};
  LossWeights w{10, 10, 0.7, 0.3, 0.25};
  const double err = hga::ad::check_gradients(
      [&](Graph<double>& g) {
        hga::CounterRng rng(99);
        return run(g, m, x, y, w, SampleMode::kSoft, &rng).loss.loss;
      },
      m.parameters());
  EXPECT_LT(err, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Heads, FullLossGradient,
                         ::testing::Values(std::make_tuple(HeadKind::kVqvibC, std::size_t{1}),
                                           std::make_tuple(HeadKind::kVqvibC, std::size_t{2}),
                                           std::make_tuple(HeadKind::kVqvibN, std::size_t{1}),
                                           std::make_tuple(HeadKind::kBetaVae, std::size_t{1})));

TEST(EntropyMode, Names) {
  EXPECT_EQ(hga::entropy_mode_from_string("conditional"), hga::EntropyMode::kConditional);
  EXPECT_EQ(hga::to_string(hga::EntropyMode::kMarginal), "marginal");
  EXPECT_THROW(hga::entropy_mode_from_string("bits"), hga::ConfigError);
}

}  // namespace
