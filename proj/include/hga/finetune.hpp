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
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "hga/autodiff/adam.hpp"
#include "hga/autodiff/graph.hpp"
#include "hga/data.hpp"
#include "hga/error.hpp"
#include "hga/models/encode.hpp"
#include "hga/pretrain.hpp"
#include "hga/rng.hpp"

namespace hga {

/// Row indices into the training split plus their finetuning classes,
/// grouped by class.
struct FewShotSubset {
  std::vector<std::size_t> indices;
  std::vector<int> labels;
};

/// Exactly k training rows per finetuning class, uniformly without replacement.
inline FewShotSubset sample_fewshot(const DatasetBundle& data, const TaskSpec& task, std::size_t k,
                                    CounterRng& rng) {
  task.validate(data.num_labels);
  std::vector<std::vector<std::size_t>> pools(task.num_classes);
  for (std::size_t i = 0; i < data.train_y.size(); ++i) {
    pools[static_cast<std::size_t>(task.map(data.train_y[i]))].push_back(i);
  }
  FewShotSubset out;
  for (std::size_t c = 0; c < pools.size(); ++c) {
    auto& pool = pools[c];
    if (pool.size() < k) {
      throw DataError("task '" + task.name + "' class " + std::to_string(c) + " has " +
                      std::to_string(pool.size()) + " training examples, need " + std::to_string(k));
    }
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
      out.indices.push_back(pool[j]);
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

/// z' = 5 z + 1 element-wise.
template <class T>
Tensor<T> shift_encodings(Tensor<T> z) {
  for (auto& v : z.storage()) v = T(5) * v + T(1);
  return z;
}

/// Reduce-on-plateau: a drop of x0.1 after `patience` epochs without a
/// relative improvement above `threshold` over the best loss.
struct PlateauSchedule {
  double lr = 1e-3;
  double factor = 0.1;
  std::size_t patience = 5;
  double threshold = 1e-4;
  double min_lr = 1e-8;
  double best = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  /// Feeds one epoch loss; returns the learning rate for the next epoch.
  double observe(double loss) {
    if (loss < best * (1.0 - threshold)) {
      best = loss;
      bad_epochs = 0;
    } else if (++bad_epochs >= patience) {
      lr *= factor;
      bad_epochs = 0;
    }
    return lr;
  }
  bool finished() const { return lr < min_lr; }
};

struct PredictorConfig {
  std::size_t hidden = 256;
  std::size_t layers = 4;  ///< fully connected layers
  std::size_t max_epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  bool shift = true;

  void validate() const {
    if (layers < 1 || hidden < 1 || batch_size < 1 || max_epochs < 1 || !(lr > 0)) {
      throw ConfigError("predictor config: layers, hidden, batch_size, max_epochs and lr must be positive");
    }
  }
};

inline void to_json(nlohmann::json& j, const PredictorConfig& c) {
  j = {{"hidden", c.hidden}, {"layers", c.layers}, {"max_epochs", c.max_epochs},
       {"batch_size", c.batch_size}, {"lr", c.lr}, {"shift", c.shift}};
}
inline void from_json(const nlohmann::json& j, PredictorConfig& c) {
  PredictorConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.layers = j.value("layers", d.layers);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.shift = j.value("shift", d.shift);
  c.validate();
}

struct PredictorRun {
  Mlp<float> model;
  std::vector<double> lr_history;  ///< lr used in each epoch
  std::vector<double> loss_history;
};

/// Trains a fresh MLP classifier on (already shifted) encodings.
inline PredictorRun train_predictor(const Tensor<float>& z, std::span<const int> y, std::size_t classes,
                                    const PredictorConfig& cfg, CounterRng& rng) {
  cfg.validate();
  if (z.rows() == 0) throw ContractError("train_predictor: empty subset");
  if (y.size() != z.rows()) throw DimensionError("train_predictor: label count mismatch");
  PredictorRun run;
  run.model = Mlp<float>(z.cols(), std::vector<std::size_t>(cfg.layers - 1, cfg.hidden), classes, rng);
  std::vector<Parameter<float>*> params;
  {
    std::vector<std::pair<std::string, Parameter<float>*>> named;
    run.model.collect("p", named);
    for (auto& [name, p] : named) params.push_back(p);
  }
  ad::Adam<float> opt(params, cfg.lr);
  PlateauSchedule plateau;
  plateau.lr = cfg.lr;
  const std::size_t n = z.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> yb;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs && !plateau.finished(); ++epoch) {
    opt.set_lr(plateau.lr);
    run.lr_history.push_back(plateau.lr);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      yb.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = y[idx[i]];
      ad::Graph<float> g;
      auto loss = ad::cross_entropy(run.model(g.constant(z.rows_slice(idx))), yb);
      opt.zero_grad();
      g.backward(loss);
      opt.step();
      loss_sum += static_cast<double>(loss.value().item()) * static_cast<double>(idx.size());
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) throw DivergenceError("predictor loss is not finite");
    run.loss_history.push_back(epoch_loss);
    plateau.observe(epoch_loss);
  }
  return run;
}

/// Fraction of rows whose argmax prediction equals the label.
inline double predictor_accuracy(const Mlp<float>& model, const Tensor<float>& z, std::span<const int> y,
                                 std::size_t batch = 2000) {
  if (z.rows() == 0) throw ContractError("predictor_accuracy: empty split");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < z.rows(); start += batch) {
    const std::size_t end = std::min(z.rows(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Graph<float> g;
    const auto pred = ad::argmax_rows(model(g.constant(z.rows_slice(idx))).value());
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == static_cast<std::size_t>(y[start + i]);
  }
  return static_cast<double>(correct) / static_cast<double>(z.rows());
}

/// A frozen encoder over one dataset. Encodings are sampled from the
/// stochastic encoder with a caller-supplied stream; training rows are counted.
class FrozenEncoder {
 public:
  FrozenEncoder(const Checkpoint& ckpt, const DatasetBundle& data) : ckpt_(&ckpt), data_(&data) {
    if (ckpt.model.config().input_dim != data.dim()) {
      throw ConfigError("checkpoint input_dim does not match dataset dim");
    }
  }

  const Checkpoint& checkpoint() const { return *ckpt_; }
  const DatasetBundle& data() const { return *data_; }

  Tensor<float> encode_train(std::span<const std::size_t> rows, const CounterRng& rng) {
    train_encoded_ += rows.size();
    return encode_sampled(ckpt_->model, data_->train_x.rows_slice(rows), rng);
  }

  Tensor<float> encode_test(const CounterRng& rng) const { return encode_sampled(ckpt_->model, data_->test_x, rng); }

  std::size_t train_rows_encoded() const { return train_encoded_; }

 private:
  const Checkpoint* ckpt_;
  const DatasetBundle* data_;
  std::size_t train_encoded_ = 0;
};

struct FewShotJob {
  std::string checkpoint_id;
  TaskSpec task;
  std::size_t k = 1;
  std::size_t trials = 10;
  std::uint64_t seed = 0;
  PredictorConfig predictor;
  std::vector<double> accuracies;
  double mean = 0;
  double stderr_ = 0;
  double mse_of_checkpoint = 0;

  nlohmann::json to_json() const {
    return {{"checkpoint_id", checkpoint_id}, {"task", task.name}, {"k", k},
            {"trials", trials}, {"seed", seed}, {"accuracies", accuracies},
            {"mean", mean}, {"stderr", stderr_}, {"mse_of_checkpoint", mse_of_checkpoint}};
  }
};

/// Sample mean and standard error (zero for a single value).
inline std::pair<double, double> mean_stderr(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

/// Test labels mapped through the task.
inline std::vector<int> task_labels(const std::vector<int>& y, const TaskSpec& task) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = task.map(y[i]);
  return out;
}

/// One trial: draw, encode, shift, fit, score on the full test split.
inline double finetune_trial(FrozenEncoder& enc, const TaskSpec& task, std::size_t k, const PredictorConfig& pc,
                             std::uint64_t seed, std::span<const int> test_labels) {
  CounterRng trial(seed);
  CounterRng draw = trial.split(1), init = trial.split(2), sampler = trial.split(3);
  const auto subset = sample_fewshot(enc.data(), task, k, draw);
  Tensor<float> z = enc.encode_train(subset.indices, sampler.split(0));
  if (pc.shift) z = shift_encodings(std::move(z));
  const auto run = train_predictor(z, subset.labels, task.num_classes, pc, init);
  Tensor<float> zt = enc.encode_test(sampler.split(1));
  if (pc.shift) zt = shift_encodings(std::move(zt));
  return predictor_accuracy(run.model, zt, test_labels);
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
  return CounterRng(seed).split(1000 + trial).next_u64();
}

/// Runs every trial of `job` against `enc`; fills results.
inline FewShotJob run_job(FewShotJob job, FrozenEncoder& enc) {
  if (job.k == 0) throw ParameterError("k must be >= 1");
  if (job.trials == 0) throw ParameterError("trials must be >= 1");
  job.task.validate(enc.data().num_labels);
  job.checkpoint_id = enc.checkpoint().id();
  job.mse_of_checkpoint = enc.checkpoint().test.mse;
  const auto labels = task_labels(enc.data().test_y, job.task);
  job.accuracies.clear();
  for (std::size_t t = 0; t < job.trials; ++t) {
    job.accuracies.push_back(finetune_trial(enc, job.task, job.k, job.predictor, trial_seed(job.seed, t), labels));
  }
  std::tie(job.mean, job.stderr_) = mean_stderr(job.accuracies);
  return job;
}

inline FewShotJob run_job(FewShotJob job, const Checkpoint& ckpt, const DatasetBundle& data) {
  FrozenEncoder enc(ckpt, data);
  return run_job(std::move(job), enc);
}

}  // namespace hga
