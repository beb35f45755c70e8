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
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "hga/pretrain.hpp"
#include "test_util.hpp"

namespace {

using hga::AnnealSchedule;
using hga::Spectrum;
using hga::TrainConfig;
using hga::test::TempDir;

const hga::DatasetBundle& synthetic() {
  static const auto b = hga::load_dataset(hga::test::synthetic_config().dataset);
  return b;
}

const Spectrum& c_spectrum() {
  static const auto s = hga::pretrain(hga::test::synthetic_config(), synthetic(), 1);
  return s;
}

TEST(AnnealSchedule, ValuesAfterWarmup) {
  AnnealSchedule s;
  EXPECT_DOUBLE_EQ(s.value_at(0), 0.001);
  EXPECT_DOUBLE_EQ(s.value_at(39), 0.001);
  EXPECT_NEAR(s.value_at(40), 0.201, 1e-12);
  EXPECT_NEAR(s.value_at(44), 1.001, 1e-12);
  const auto w = s.apply(hga::LossWeights{}, 41);
  EXPECT_NEAR(w.lambda_h, 0.401, 1e-12);
  EXPECT_EQ(w.lambda_c, 0.0);
}

TEST(AnnealSchedule, Validation) {
  AnnealSchedule s;
  s.warmup_epochs = 200;
  EXPECT_THROW(s.validate(), hga::ConfigError);
  s = AnnealSchedule{};
  s.increment = -0.1;
  EXPECT_THROW(s.validate(), hga::ConfigError);
  s = AnnealSchedule{};
  s.increment = 0.0;
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW(hga::knob_from_string("lambda_x"), hga::ConfigError);
}

TEST(Termination, Examples) {
  const std::vector<double> chance{0.11, 0.10, 0.105}, good{0.90, 0.89, 0.91}, three{0.35, 0.34, 0.36};
  EXPECT_TRUE(hga::termination_check(chance, 10));
  EXPECT_FALSE(hga::termination_check(good, 10));
  EXPECT_TRUE(hga::termination_check(three, 3));
  const std::vector<double> above{0.36, 0.355, 0.36};
  EXPECT_FALSE(hga::termination_check(above, 3));
  const std::vector<double> short_window{0.1, 0.1};
  EXPECT_THROW(hga::termination_check(short_window, 10), hga::ContractError);
}

TEST(TrainConfig, JsonRoundTripAndId) {
  auto c = hga::test::synthetic_config(hga::HeadKind::kVqvibN);
  nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(c.spectrum_id(3), "vqvib_n_n1_s3");
  c.name = "mine";
  EXPECT_EQ(c.spectrum_id(3), "mine");
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), hga::ConfigError);
}

TEST(TableOneDefaults, VqvibCRow) {
  // Defaults reproduce the FashionMNIST VQ-VIB_C n=1 row.
  TrainConfig c;
  EXPECT_EQ(c.weights.lambda_u, 10.0);
  EXPECT_EQ(c.weights.lambda_i, 10.0);
  EXPECT_EQ(c.schedule.initial, 0.001);
  EXPECT_EQ(c.schedule.increment, 0.2);
  EXPECT_EQ(c.encoder.latent_dim, 32u);
  EXPECT_EQ(c.encoder.codebook_size, 1000u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.schedule.warmup_epochs, 40u);
}

TEST(Pretrain, DimensionMismatchRejected) {
  auto c = hga::test::synthetic_config();
  c.encoder.input_dim = 5;
  EXPECT_THROW(hga::pretrain(c, synthetic(), 1), hga::ConfigError);
  c = hga::test::synthetic_config();
  c.encoder.num_classes = 3;
  EXPECT_THROW(hga::pretrain(c, synthetic(), 1), hga::ConfigError);
}

TEST(Pretrain, NanLossAborts) {
  auto data = synthetic();
  data.train_x(3, 1) = NAN;
  try {
    hga::pretrain(hga::test::synthetic_config(), data, 1);
    FAIL() << "expected divergence";
  } catch (const hga::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 0"), std::string::npos);
  }
}

TEST(Pretrain, CancelHookStops) {
  int epochs = 0;
  hga::PretrainHooks hooks{[&](const hga::EpochRecord&) { ++epochs; }, [&] { return epochs >= 2; }};
  EXPECT_THROW(hga::pretrain(hga::test::synthetic_config(), synthetic(), 1, hooks), hga::Error);
  EXPECT_EQ(epochs, 2);
}

TEST(Pretrain, LowWarmupAccuracyWarns) {
  auto c = hga::test::synthetic_config();
  c.warmup_accuracy_floor = 0.999;
  c.schedule.max_epochs = 32;
  const auto s = hga::pretrain(c, synthetic(), 1);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("warmup accuracy"), std::string::npos);
}

TEST(Spectrum, ReproducibleTrajectories) {
  const auto again = hga::pretrain(hga::test::synthetic_config(), synthetic(), 1);
  EXPECT_EQ(hga::epoch_log_csv(again), hga::epoch_log_csv(c_spectrum()));
  EXPECT_EQ(hga::spectrum_manifest(again).dump(), hga::spectrum_manifest(c_spectrum()).dump());
}

TEST(Spectrum, KnobIncreasesByIncrement) {
  const auto& s = c_spectrum();
  const auto& sch = s.config.schedule;
  for (std::size_t i = sch.warmup_epochs; i < s.epochs.size(); ++i) {
    EXPECT_NEAR(s.epochs[i].knob_value - s.epochs[i - 1].knob_value, sch.increment, 1e-9);
  }
  for (std::size_t i = 1; i < s.checkpoints.size(); ++i) {
    EXPECT_GT(s.checkpoints[i].weights.lambda_h, s.checkpoints[i - 1].weights.lambda_h);
  }
}

TEST(Spectrum, CheckpointLayout) {
  const auto& s = c_spectrum();
  ASSERT_GE(s.checkpoints.size(), 5u);
  EXPECT_LE(s.checkpoints.size(), 13u);
  EXPECT_EQ(s.checkpoints.front().epoch, s.config.schedule.warmup_epochs - 1);
  EXPECT_EQ(s.checkpoints.back().epoch, s.epochs.size() - 1);
  for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
    EXPECT_EQ(s.checkpoints[i].index, i);
    if (i > 0) {
      EXPECT_GT(s.checkpoints[i].epoch, s.checkpoints[i - 1].epoch);
    }
    EXPECT_EQ(s.checkpoints[i].test.mse, s.epochs[s.checkpoints[i].epoch].test.mse);
  }
  EXPECT_EQ(s.checkpoints[2].id(), "vqvib_c_n1_s1-c02");
}

TEST(Spectrum, MseRisesAlongSequenceWithinBand) {
  const auto& s = c_spectrum();
  double running = 0;
  for (const auto& c : s.checkpoints) {
    EXPECT_GE(c.test.mse, 0.9 * running);
    running = std::max(running, c.test.mse);
  }
  EXPECT_GT(s.checkpoints.back().test.mse, s.checkpoints.front().test.mse);
}

TEST(Spectrum, EffectiveCountNonIncreasing) {
  const auto& s = c_spectrum();
  for (std::size_t i = 1; i < s.checkpoints.size(); ++i) {
    EXPECT_LE(*s.checkpoints[i].test.effective_count, *s.checkpoints[i - 1].test.effective_count) << i;
  }
  EXPECT_LT(*s.checkpoints.back().test.effective_count, *s.checkpoints.front().test.effective_count);
}

TEST(Spectrum, DecoderBeatsMeanPredictor) {
  const auto& s = c_spectrum();
  EXPECT_LT(s.checkpoints.front().test.mse, synthetic().feature_variance());
  EXPECT_LT(s.checkpoints.front().train_mse, synthetic().feature_variance());
}

TEST(Spectrum, ZeroIncrementDoesNotAnneal) {
  auto c = hga::test::synthetic_config();
  c.schedule.increment = 0.0;
  c.schedule.max_epochs = 60;
  const auto s = hga::pretrain(c, synthetic(), 2);
  EXPECT_EQ(s.stopped_by, "max_epochs");
  double lo = INFINITY, hi = 0;
  for (const auto& k : s.checkpoints) {
    lo = std::min(lo, k.test.mse);
    hi = std::max(hi, k.test.mse);
    EXPECT_EQ(k.weights.lambda_h, c.schedule.initial);
  }
  // The annealed run moves MSE by far more than continued training does.
  const auto& a = c_spectrum();
  EXPECT_LT(hi - lo, 0.25 * (a.checkpoints.back().test.mse - a.checkpoints.front().test.mse));
}

TEST(Spectrum, VqvibNKeepsSeveralPrototypes) {
  const auto s = hga::pretrain(hga::test::synthetic_config(hga::HeadKind::kVqvibN), synthetic(), 1);
  EXPECT_GT(*s.checkpoints.back().test.effective_count, 1u);
  EXPECT_EQ(s.checkpoints.back().knob, hga::AnnealKnob::kLambdaC);
  EXPECT_GT(s.checkpoints.back().weights.lambda_c, s.checkpoints.front().weights.lambda_c);
}

TEST(Spectrum, BetaVaeHasNoCodebookMetrics) {
  auto c = hga::test::synthetic_config(hga::HeadKind::kBetaVae);
  c.schedule.max_epochs = 40;
  const auto s = hga::pretrain(c, synthetic(), 1);
  EXPECT_FALSE(s.checkpoints.front().test.effective_count.has_value());
  EXPECT_TRUE(hga::metrics_json(s.checkpoints.front().test)["effective_count"].is_null());
}

// Raising a fixed lambda_H lowers the converged assignment entropy.
TEST(Objective, EntropyRespondsMonotonicallyToLambdaH) {
  double previous = INFINITY;
  for (double lambda : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    auto c = hga::test::synthetic_config();
    c.schedule.initial = lambda;
    c.schedule.increment = 0.0;
    c.schedule.warmup_epochs = 59;
    c.schedule.max_epochs = 60;
    const auto s = hga::pretrain(c, synthetic(), 4);
    const double h = *s.epochs.back().test.assignment_entropy;
    EXPECT_LE(h, previous + 1e-9) << "lambda_h=" << lambda;
    previous = h;
  }
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  const auto& c = c_spectrum().checkpoints[1];
  hga::save_checkpoint(c, dir.str("a.hgac"));
  const auto loaded = hga::load_checkpoint(dir.str("a.hgac"));
  hga::save_checkpoint(loaded, dir.str("b.hgac"));
  EXPECT_EQ(hga::io::read_file(dir.str("a.hgac")), hga::io::read_file(dir.str("b.hgac")));
  EXPECT_EQ(loaded.id(), c.id());
  auto lp = const_cast<hga::Triad<float>&>(loaded.model).named_parameters();
  auto cp = const_cast<hga::Triad<float>&>(c.model).named_parameters();
  for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_EQ(lp[i].second->value, cp[i].second->value);
}

TEST(Checkpoint, ReloadReproducesMetrics) {
  TempDir dir;
  for (const auto& c : c_spectrum().checkpoints) {
    hga::save_checkpoint(c, dir.str("c.hgac"));
    const auto loaded = hga::load_checkpoint(dir.str("c.hgac"));
    const auto m = hga::evaluate_model(loaded.model, synthetic().test_x, synthetic().test_y);
    EXPECT_NEAR(m.mse, c.test.mse, 1e-4);
    EXPECT_NEAR(m.accuracy, c.test.accuracy, 1e-4);
  }
}

TEST(Checkpoint, CorruptionDetected) {
  const auto bytes = hga::encode_checkpoint(c_spectrum().checkpoints[0]);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(hga::decode_checkpoint(bad_magic, "m"), hga::FormatError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(hga::decode_checkpoint(flipped, "f"), hga::FormatError);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 3);
  EXPECT_THROW(hga::decode_checkpoint(truncated, "t"), hga::FormatError);
  // A future version with a valid checksum is still refused.
  std::vector<std::uint8_t> body(bytes.begin(), bytes.end() - 4);
  body[4] = 2;
  hga::io::ByteWriter w;
  w.raw(body.data(), body.size());
  w.seal();
  try {
    hga::decode_checkpoint(w.buffer(), "v");
    FAIL();
  } catch (const hga::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = hga::encode_checkpoint(c_spectrum().checkpoints[0]);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "HGAC");
  EXPECT_EQ(bytes[4] | (bytes[5] << 8), 1);
  const std::uint32_t meta_len = bytes[6] | (bytes[7] << 8) | (bytes[8] << 16) | (std::uint32_t{bytes[9]} << 24);
  const auto meta = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + meta_len);
  EXPECT_EQ(meta["index"], 0);
  EXPECT_EQ(meta["encoder"]["head"], "vqvib_c");
  EXPECT_TRUE(meta["test"].contains("effective_count"));
}

TEST(Spectrum, SaveLoadRoundTrip) {
  TempDir dir;
  const auto& s = c_spectrum();
  hga::save_spectrum(s, dir.str("spec"));
  const auto back = hga::load_spectrum(dir.str("spec"));
  EXPECT_EQ(back.id, s.id);
  EXPECT_EQ(back.checkpoints.size(), s.checkpoints.size());
  EXPECT_EQ(hga::encode_checkpoint(back.checkpoints.back()), hga::encode_checkpoint(s.checkpoints.back()));
  const auto manifest = nlohmann::json::parse(std::ifstream(dir.str("spec/spectrum.json")));
  EXPECT_EQ(manifest["checkpoints"][0]["file"], "ckpt_00.hgac");
  EXPECT_EQ(manifest["stopped_by"], s.stopped_by);
  std::ifstream csv(dir.str("spec/epochs.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "epoch,knob_value,train_loss,test_mse,test_accuracy,assignment_entropy,effective_count");
}

}  // namespace
