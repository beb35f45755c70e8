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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hga/autodiff/adam.hpp"
#include "hga/autodiff/graph.hpp"
#include "hga/binary_io.hpp"
#include "hga/data.hpp"
#include "hga/error.hpp"
#include "hga/models/encode.hpp"
#include "hga/models/triad.hpp"
#include "hga/objectives.hpp"
#include "hga/rng.hpp"

namespace hga {

enum class AnnealKnob { kLambdaH, kLambdaC };

inline std::string to_string(AnnealKnob k) { return k == AnnealKnob::kLambdaH ? "lambda_h" : "lambda_c"; }

inline AnnealKnob knob_from_string(const std::string& s) {
  if (s == "lambda_h") return AnnealKnob::kLambdaH;
  if (s == "lambda_c") return AnnealKnob::kLambdaC;
  throw ConfigError("unknown anneal knob '" + s + "'");
}

struct AnnealSchedule {
  AnnealKnob knob = AnnealKnob::kLambdaH;
  double initial = 0.001;
  double increment = 0.2;
  std::size_t warmup_epochs = 40;
  std::size_t max_epochs = 200;

  /// Zero increment is accepted and disables annealing.
  void validate() const {
    if (!(increment >= 0) || !std::isfinite(increment)) throw ConfigError("anneal increment must be >= 0");
    if (!(initial >= 0)) throw ConfigError("anneal initial value must be >= 0");
    if (warmup_epochs == 0) throw ConfigError("warmup_epochs must be >= 1");
    if (warmup_epochs >= max_epochs) throw ConfigError("warmup_epochs must be < max_epochs");
  }

  /// Knob value used during `epoch` (0-based).
  double value_at(std::size_t epoch) const {
    if (epoch < warmup_epochs) return initial;
    return initial + static_cast<double>(epoch - warmup_epochs + 1) * increment;
  }

  LossWeights apply(LossWeights w, std::size_t epoch) const {
    (knob == AnnealKnob::kLambdaH ? w.lambda_h : w.lambda_c) = value_at(epoch);
    return w;
  }
};

inline void to_json(nlohmann::json& j, const AnnealSchedule& s) {
  j = {{"knob", to_string(s.knob)}, {"initial", s.initial}, {"increment", s.increment},
       {"warmup_epochs", s.warmup_epochs}, {"max_epochs", s.max_epochs}};
}
inline void from_json(const nlohmann::json& j, AnnealSchedule& s) {
  AnnealSchedule d;
  s.knob = knob_from_string(j.value("knob", to_string(d.knob)));
  s.initial = j.value("initial", d.initial);
  s.increment = j.value("increment", d.increment);
  s.warmup_epochs = j.value("warmup_epochs", d.warmup_epochs);
  s.max_epochs = j.value("max_epochs", d.max_epochs);
}

struct TrainConfig {
  std::string name;  ///< spectrum id; derived from head/n/seed when empty
  EncoderConfig encoder;
  LossWeights weights;
  AnnealSchedule schedule;
  EntropyMode entropy_mode = EntropyMode::kMarginal;
  DatasetRef dataset;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t termination_window = 3;
  std::size_t mse_bins = 12;
  double warmup_accuracy_floor = 0.85;  ///< below this a warning is recorded

  void validate() const {
    encoder.validate();
    weights.validate();
    schedule.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be > 0");
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    if (termination_window < 3) throw ConfigError("termination_window must be >= 3");
    if (mse_bins < 1) throw ConfigError("mse_bins must be >= 1");
  }

  std::string spectrum_id(std::uint64_t seed) const {
    if (!name.empty()) return name;
    return to_string(encoder.head) + "_n" + std::to_string(encoder.n) + "_s" + std::to_string(seed);
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"name", c.name},
       {"encoder", c.encoder},
       {"weights", c.weights},
       {"schedule", c.schedule},
       {"entropy_mode", to_string(c.entropy_mode)},
       {"dataset", c.dataset},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"termination_window", c.termination_window},
       {"mse_bins", c.mse_bins},
       {"warmup_accuracy_floor", c.warmup_accuracy_floor}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.name = j.value("name", d.name);
  if (j.contains("encoder")) c.encoder = j["encoder"].get<EncoderConfig>();
  if (j.contains("weights")) c.weights = j["weights"].get<LossWeights>();
  if (j.contains("schedule")) c.schedule = j["schedule"].get<AnnealSchedule>();
  c.entropy_mode = entropy_mode_from_string(j.value("entropy_mode", to_string(d.entropy_mode)));
  if (j.contains("dataset")) c.dataset = j["dataset"].get<DatasetRef>();
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.termination_window = j.value("termination_window", d.termination_window);
  c.mse_bins = j.value("mse_bins", d.mse_bins);
  c.warmup_accuracy_floor = j.value("warmup_accuracy_floor", d.warmup_accuracy_floor);
}

/// True when the mean of the window is at most chance + 0.02.
inline bool termination_check(std::span<const double> recent_accuracies, std::size_t n_classes) {
  if (recent_accuracies.size() < 3) throw ContractError("termination_check: need a window of >= 3 accuracies");
  if (n_classes == 0) throw ContractError("termination_check: n_classes must be > 0");
  const double mean = std::accumulate(recent_accuracies.begin(), recent_accuracies.end(), 0.0) /
                      static_cast<double>(recent_accuracies.size());
  return mean <= 1.0 / static_cast<double>(n_classes) + 0.02;
}

// ---------------------------------------------------------------------------
// Evaluation of a triad on a labelled split

struct ModelMetrics {
  double mse = 0;       ///< mean squared reconstruction error per element
  double accuracy = 0;  ///< pre-training (low-level label) accuracy
  std::optional<double> assignment_entropy;  ///< nats, over hard assignments
  std::optional<std::size_t> effective_count;  ///< prototypes used by > 1%
};

inline nlohmann::json metrics_json(const ModelMetrics& m) {
  nlohmann::json j{{"mse", m.mse}, {"accuracy", m.accuracy}};
  j["assignment_entropy"] = m.assignment_entropy ? nlohmann::json(*m.assignment_entropy) : nlohmann::json();
  j["effective_count"] = m.effective_count ? nlohmann::json(*m.effective_count) : nlohmann::json();
  return j;
}

/// Deterministic (no sampling) forward pass over a whole split. VQ-VIB_N
/// prototype usage comes from usage_indices.
template <class T>
ModelMetrics evaluate_model(const Triad<T>& triad, const Tensor<T>& x, std::span<const int> y,
                            std::size_t batch = 500) {
  const std::size_t n = x.rows();
  if (y.size() != n) throw DimensionError("evaluate_model: label count mismatch");
  ModelMetrics out;
  double sq = 0;
  std::size_t correct = 0;
  std::vector<double> freq(is_discrete(triad.head()) ? triad.config().codebook_size : 0, 0.0);
  std::size_t assignments = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Graph<T> g;
    auto xb = g.constant(x.rows_slice(idx));
    auto enc = encode(xb, triad, nullptr, SampleMode::kEval);
    const auto& xh = decode(enc.z, triad).value();
    const auto& xv = xb.value();
    for (std::size_t i = 0; i < xh.size(); ++i) {
      const double d = static_cast<double>(xh[i]) - static_cast<double>(xv[i]);
      sq += d * d;
    }
    const auto pred = ad::argmax_rows(predict_logits(enc.z, triad).value());
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == static_cast<std::size_t>(y[start + i]);
    if (triad.head() == HeadKind::kVqvibC) {
      for (auto k : enc.indices) freq[k] += 1.0;
      assignments += enc.indices.size();
    }
  }
  if (triad.head() == HeadKind::kVqvibN) {
    const auto used = usage_indices(triad, x);
    for (auto k : used) freq[k] += 1.0;
    assignments = used.size();
  }
  out.mse = sq / static_cast<double>(n * x.cols());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  if (!freq.empty() && assignments > 0) {
    double h = 0;
    std::size_t count = 0;
    for (auto& f : freq) {
      f /= static_cast<double>(assignments);
      if (f > 0) h -= f * std::log(f);
      if (f > 0.01) ++count;
    }
    out.assignment_entropy = h;
    out.effective_count = count;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  std::string spectrum_id;
  std::size_t index = 0;  ///< position in the spectrum
  std::size_t epoch = 0;
  AnnealKnob knob = AnnealKnob::kLambdaH;
  LossWeights weights;  ///< at save time, knob value included
  EntropyMode entropy_mode = EntropyMode::kMarginal;
  ModelMetrics test;
  double train_mse = 0;
  Triad<float> model;

  std::string id() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "-c%02zu", index);
    return spectrum_id + buf;
  }

  nlohmann::json metadata() const {
    nlohmann::json m{{"id", id()},
                     {"spectrum_id", spectrum_id},
                     {"index", index},
                     {"epoch", epoch},
                     {"knob", to_string(knob)},
                     {"weights", weights},
                     {"entropy_mode", to_string(entropy_mode)},
                     {"encoder", model.config()},
                     {"train_mse", train_mse}};
    m["test"] = metrics_json(test);
    return m;
  }
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  io::ByteWriter w;
  w.bytes("HGAC");
  w.u16(kCheckpointVersion);
  const std::string meta = c.metadata().dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  auto model = c.model;
  const auto params = model.named_parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    const auto& shape = p->value.shape();
    w.u16(static_cast<std::uint16_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(p->value.storage());
  }
  w.seal();
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.size() < 6 || std::string(bytes.begin(), bytes.begin() + 4) != "HGAC") {
    throw FormatError(what + ": bad magic");
  }
  const auto body = io::verify_crc(bytes, what);
  io::ByteReader r(body, what);
  r.str(4);
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad metadata: " + e.what());
  }
  Checkpoint c;
  c.spectrum_id = meta.at("spectrum_id").get<std::string>();
  c.index = meta.at("index").get<std::size_t>();
  c.epoch = meta.at("epoch").get<std::size_t>();
  c.knob = knob_from_string(meta.at("knob").get<std::string>());
  c.weights = meta.at("weights").get<LossWeights>();
  c.entropy_mode = entropy_mode_from_string(meta.at("entropy_mode").get<std::string>());
  c.train_mse = meta.at("train_mse").get<double>();
  const auto& t = meta.at("test");
  c.test.mse = t.at("mse").get<double>();
  c.test.accuracy = t.at("accuracy").get<double>();
  if (!t.at("assignment_entropy").is_null()) c.test.assignment_entropy = t["assignment_entropy"].get<double>();
  if (!t.at("effective_count").is_null()) c.test.effective_count = t["effective_count"].get<std::size_t>();
  c.model = Triad<float>(meta.at("encoder").get<EncoderConfig>(), 0);
  auto params = c.model.named_parameters();
  const std::size_t count = r.u32();
  if (count != params.size()) throw FormatError(what + ": expected " + std::to_string(params.size()) + " blobs");
  for (const auto& [name, p] : params) {
    const std::string got = r.str(r.u16());
    if (got != name) throw FormatError(what + ": expected blob '" + name + "', found '" + got + "'");
    Shape shape(r.u16());
    for (auto& d : shape) d = r.u32();
    if (shape != p->value.shape()) {
      throw FormatError(what + ": blob '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(p->value.shape()));
    }
    r.f32s(p->value.storage());
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  io::write_file(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Spectrum

struct EpochRecord {
  std::size_t epoch = 0;
  double knob_value = 0;
  double train_loss = 0;
  ModelMetrics test;
};

struct Spectrum {
  std::string id;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::string dataset_provenance;
  std::vector<Checkpoint> checkpoints;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;
  std::string stopped_by;  ///< "termination" or "max_epochs"

  const Checkpoint& checkpoint(const std::string& cid) const {
    for (const auto& c : checkpoints) {
      if (c.id() == cid) return c;
    }
    throw IndexError("spectrum '" + id + "' has no checkpoint '" + cid + "'");
  }
};

inline std::string checkpoint_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%02zu.hgac", index);
  return buf;
}

/// Fixed-format CSV of the per-epoch trajectory.
inline std::string epoch_log_csv(const Spectrum& s) {
  std::string out = "epoch,knob_value,train_loss,test_mse,test_accuracy,assignment_entropy,effective_count\n";
  char buf[256];
  for (const auto& e : s.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%zu\n", e.epoch, e.knob_value, e.train_loss,
                  e.test.mse, e.test.accuracy, e.test.assignment_entropy.value_or(0.0),
                  e.test.effective_count.value_or(0));
    out += buf;
  }
  return out;
}

inline nlohmann::json spectrum_manifest(const Spectrum& s) {
  nlohmann::json m{{"id", s.id},
                   {"config", s.config},
                   {"seed", s.seed},
                   {"dataset", s.config.dataset.id()},
                   {"dataset_provenance", s.dataset_provenance},
                   {"head", to_string(s.config.encoder.head)},
                   {"n", s.config.encoder.n},
                   {"warnings", s.warnings},
                   {"stopped_by", s.stopped_by},
                   {"epochs_run", s.epochs.size()}};
  m["checkpoints"] = nlohmann::json::array();
  for (const auto& c : s.checkpoints) {
    nlohmann::json e = c.metadata();
    e.erase("encoder");
    e["file"] = checkpoint_file_name(c.index);
    m["checkpoints"].push_back(std::move(e));
  }
  return m;
}

namespace detail {
inline void write_text(const std::filesystem::path& p, const std::string& text) {
  io::write_file(p.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}
inline nlohmann::json read_json(const std::filesystem::path& p) {
  const auto raw = io::read_file(p.string());
  try {
    return nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}
}  // namespace detail

/// Writes `dir`/spectrum.json, `dir`/epochs.csv and one file per checkpoint.
inline void save_spectrum(const Spectrum& s, const std::string& dir) {
  const std::filesystem::path d(dir);
  std::filesystem::create_directories(d);
  for (const auto& c : s.checkpoints) save_checkpoint(c, (d / checkpoint_file_name(c.index)).string());
  detail::write_text(d / "epochs.csv", epoch_log_csv(s));
  detail::write_text(d / "spectrum.json", spectrum_manifest(s).dump(2) + "\n");
}

/// Reads a manifest and its checkpoints (the epoch log is not reloaded).
inline Spectrum load_spectrum(const std::string& dir) {
  const std::filesystem::path d(dir);
  const auto m = detail::read_json(d / "spectrum.json");
  Spectrum s;
  s.id = m.at("id").get<std::string>();
  s.config = m.at("config").get<TrainConfig>();
  s.seed = m.at("seed").get<std::uint64_t>();
  s.dataset_provenance = m.value("dataset_provenance", std::string());
  s.warnings = m.value("warnings", std::vector<std::string>{});
  s.stopped_by = m.value("stopped_by", std::string());
  for (const auto& e : m.at("checkpoints")) {
    s.checkpoints.push_back(load_checkpoint((d / e.at("file").get<std::string>()).string()));
  }
  for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
    if (s.checkpoints[i].index != i) throw FormatError(dir + ": checkpoint sequence out of order");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Training

struct PretrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<bool()> cancelled;
};

namespace detail {

struct Snapshot {
  std::size_t epoch;
  double mse;
  Triad<float> model;
};

/// One optimization epoch; returns the mean batch loss.
inline double train_epoch(Triad<float>& model, ad::Adam<float>& opt, const DatasetBundle& data,
                          const TrainConfig& cfg, const LossWeights& w, CounterRng& rng) {
  const std::size_t n = data.train_x.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  double loss_sum = 0;
  std::size_t batches = 0;
  std::vector<int> yb;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t end = std::min(n, start + cfg.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    yb.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = data.train_y[idx[i]];
    ad::Graph<float> g;
    auto x = g.constant(data.train_x.rows_slice(idx));
    auto enc = encode(x, model, &rng, SampleMode::kTrain);
    auto loss = compute_loss(model.head(), enc, decode(enc.z, model), predict_logits(enc.z, model), x, yb, w,
                             cfg.entropy_mode);
    if (!std::isfinite(loss.total)) {
      throw DivergenceError("non-finite loss at batch " + std::to_string(batches) +
                            " (utility=" + std::to_string(loss.utility) +
                            ", mse=" + std::to_string(loss.reconstruction_mse) +
                            ", entropy=" + std::to_string(loss.entropy_term) +
                            ", complexity=" + std::to_string(loss.complexity_term) + ")");
    }
    opt.zero_grad();
    g.backward(loss.loss);
    opt.step();
    loss_sum += loss.total;
    ++batches;
  }
  return loss_sum / static_cast<double>(batches);
}

/// First index (in `snaps`, ordered by epoch) reaching each bin edge.
inline std::vector<std::size_t> select_bins(const std::vector<Snapshot>& snaps, double m0, double m_end,
                                            std::size_t bins) {
  std::vector<std::size_t> picks{0};
  const double dir = m_end >= m0 ? 1.0 : -1.0;
  for (std::size_t b = 1; b < bins; ++b) {
    const double edge = m0 + (m_end - m0) * static_cast<double>(b) / static_cast<double>(bins);
    for (std::size_t i = 1; i < snaps.size(); ++i) {
      if (dir * (snaps[i].mse - edge) >= 0) {
        if (i != picks.back()) picks.push_back(i);
        break;
      }
    }
  }
  if (snaps.size() - 1 != picks.back()) picks.push_back(snaps.size() - 1);
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
  return picks;
}

}  // namespace detail

/// Trains, anneals the configured knob after warmup and returns the
/// checkpointed spectrum.
inline Spectrum pretrain(const TrainConfig& cfg_in, const DatasetBundle& data, std::uint64_t seed,
                         const PretrainHooks& hooks = {}) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  data.validate();
  if (cfg.encoder.input_dim != data.dim()) {
    throw ConfigError("encoder input_dim " + std::to_string(cfg.encoder.input_dim) + " != dataset dim " +
                      std::to_string(data.dim()));
  }
  if (cfg.encoder.num_classes != data.num_labels) {
    throw ConfigError("encoder num_classes must equal the dataset's low-level label count");
  }
  CounterRng root(seed);
  Triad<float> model(cfg.encoder, root.split(1).next_u64());
  CounterRng rng = root.split(2);
  ad::Adam<float> opt(model.parameters(), cfg.lr);

  Spectrum spec;
  spec.id = cfg.spectrum_id(seed);
  spec.config = cfg;
  spec.seed = seed;
  spec.dataset_provenance = data.provenance;

  std::vector<detail::Snapshot> best_up, best_down;  // running extremes after warmup
  double first_loss = 0;
  std::size_t blowups = 0;
  std::vector<double> window;
  spec.stopped_by = "max_epochs";
  const auto& sch = cfg.schedule;
  for (std::size_t epoch = 0; epoch < sch.max_epochs; ++epoch) {
    if (hooks.cancelled && hooks.cancelled()) throw Error("pretrain cancelled");
    const LossWeights w = sch.apply(cfg.weights, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.knob_value = sch.value_at(epoch);
    try {
      rec.train_loss = detail::train_epoch(model, opt, data, cfg, w, rng);
    } catch (const DivergenceError& e) {
      throw DivergenceError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (epoch == 0) first_loss = rec.train_loss;
    blowups = std::abs(rec.train_loss) > 10 * std::abs(first_loss) ? blowups + 1 : 0;
    if (blowups >= 3) {
      throw DivergenceError("epoch " + std::to_string(epoch) + ": loss " + std::to_string(rec.train_loss) +
                            " above 10x its first-epoch value for 3 epochs");
    }
    rec.test = evaluate_model(model, data.test_x, data.test_y);
    spec.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (epoch + 1 == sch.warmup_epochs) {
      if (rec.test.accuracy < cfg.warmup_accuracy_floor) {
        spec.warnings.push_back("warmup accuracy " + std::to_string(rec.test.accuracy) + " below " +
                                std::to_string(cfg.warmup_accuracy_floor));
      }
      best_up.push_back({epoch, rec.test.mse, model});
      best_down.push_back({epoch, rec.test.mse, model});
      continue;
    }
    if (epoch < sch.warmup_epochs) continue;
    if (rec.test.mse > best_up.back().mse) best_up.push_back({epoch, rec.test.mse, model});
    if (rec.test.mse < best_down.back().mse) best_down.push_back({epoch, rec.test.mse, model});
    window.push_back(rec.test.accuracy);
    if (window.size() > cfg.termination_window) window.erase(window.begin());
    const bool last = epoch + 1 == sch.max_epochs;
    const bool done = window.size() == cfg.termination_window && termination_check(window, data.num_labels);
    if (done || last) {
      if (done) spec.stopped_by = "termination";
      const double m0 = best_up.front().mse, m_end = rec.test.mse;
      auto& snaps = m_end >= m0 ? best_up : best_down;
      if (snaps.back().epoch != epoch) snaps.push_back({epoch, rec.test.mse, model});
      for (auto i : detail::select_bins(snaps, m0, m_end, cfg.mse_bins)) {
        Checkpoint c;
        c.spectrum_id = spec.id;
        c.index = spec.checkpoints.size();
        c.epoch = snaps[i].epoch;
        c.knob = sch.knob;
        c.weights = sch.apply(cfg.weights, c.epoch);
        c.entropy_mode = cfg.entropy_mode;
        c.model = std::move(snaps[i].model);
        c.test = evaluate_model(c.model, data.test_x, data.test_y);
        c.train_mse = evaluate_model(c.model, data.train_x, data.train_y).mse;
        spec.checkpoints.push_back(std::move(c));
      }
      break;
    }
  }
  return spec;
}

}  // namespace hga
