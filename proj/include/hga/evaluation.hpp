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
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

#include "hga/data.hpp"
#include "hga/error.hpp"
#include "hga/finetune.hpp"
#include "hga/pretrain.hpp"

namespace hga {

struct CurvePoint {
  std::string spectrum_id;
  std::string checkpoint_id;
  std::size_t index = 0;  ///< checkpoint position in its spectrum
  HeadKind head = HeadKind::kVqvibC;
  std::size_t n = 1;
  double mse = 0;
  std::size_t k = 1;
  std::string task;
  double mean_acc = 0;
  double stderr_ = 0;
  std::vector<double> accuracies;
};

/// Finetunes every checkpoint for every k; points sorted by (k, MSE).
inline std::vector<CurvePoint> sweep(const Spectrum& spectrum, const DatasetBundle& data, const TaskSpec& task,
                                     const std::vector<std::size_t>& k_values, std::size_t trials,
                                     std::uint64_t seed, const PredictorConfig& pc = {}) {
  if (spectrum.checkpoints.empty()) throw ContractError("sweep: empty spectrum");
  std::vector<CurvePoint> out;
  for (const auto& ckpt : spectrum.checkpoints) {
    FrozenEncoder enc(ckpt, data);
    for (auto k : k_values) {
      FewShotJob job;
      job.task = task;
      job.k = k;
      job.trials = trials;
      job.seed = seed;
      job.predictor = pc;
      job = run_job(std::move(job), enc);
      out.push_back({spectrum.id, ckpt.id(), ckpt.index, ckpt.model.config().head, ckpt.model.config().n,
                     ckpt.test.mse, k, task.name, job.mean, job.stderr_, job.accuracies});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.k != b.k ? a.k < b.k : a.mse < b.mse;
  });
  return out;
}

/// Pools curves of equally binned spectra by checkpoint position: MSE is
/// averaged and trial accuracies are concatenated.
inline std::vector<CurvePoint> pool_by_index(const std::vector<CurvePoint>& points) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const CurvePoint*>> groups;
  for (const auto& p : points) groups[{p.k, p.index}].push_back(&p);
  std::vector<CurvePoint> out;
  for (const auto& [key, ps] : groups) {
    CurvePoint c = *ps.front();
    c.spectrum_id = "pooled";
    c.checkpoint_id = "index-" + std::to_string(key.second);
    c.accuracies.clear();
    c.mse = 0;
    for (const auto* p : ps) {
      c.mse += p->mse / static_cast<double>(ps.size());
      c.accuracies.insert(c.accuracies.end(), p->accuracies.begin(), p->accuracies.end());
    }
    std::tie(c.mean_acc, c.stderr_) = mean_stderr(c.accuracies);
    out.push_back(std::move(c));
  }
  return out;
}

struct SelectionResult {
  std::string strategy;  ///< "most_complex", "validation" or "oracle"
  std::string checkpoint_id;
  std::size_t index = 0;
  double test_accuracy = 0;
  std::size_t v = 0;
  double validation_accuracy = 0;
  std::vector<double> validation_per_checkpoint;
  std::vector<double> test_per_checkpoint;

  nlohmann::json to_json() const {
    nlohmann::json j{{"strategy", strategy}, {"checkpoint_id", checkpoint_id}, {"index", index},
                     {"test_accuracy", test_accuracy}};
    if (strategy == "validation") {
      j["v"] = v;
      j["validation_accuracy"] = validation_accuracy;
      j["validation_per_checkpoint"] = validation_per_checkpoint;
    }
    if (!test_per_checkpoint.empty()) j["test_per_checkpoint"] = test_per_checkpoint;
    return j;
  }
};

/// Minimum test-MSE checkpoint; ties go to the earliest epoch.
inline SelectionResult select_most_complex(const Spectrum& spectrum) {
  if (spectrum.checkpoints.empty()) throw ContractError("select_most_complex: empty spectrum");
  const Checkpoint* best = &spectrum.checkpoints.front();
  for (const auto& c : spectrum.checkpoints) {
    if (c.test.mse < best->test.mse || (c.test.mse == best->test.mse && c.epoch < best->epoch)) best = &c;
  }
  SelectionResult r;
  r.strategy = "most_complex";
  r.checkpoint_id = best->id();
  r.index = best->index;
  return r;
}

/// Highest mean test accuracy among sweep points at one k.
inline SelectionResult select_oracle(const std::vector<CurvePoint>& curve, std::size_t k) {
  const CurvePoint* best = nullptr;
  for (const auto& p : curve) {
    if (p.k == k && (!best || p.mean_acc > best->mean_acc)) best = &p;
  }
  if (!best) throw ContractError("select_oracle: no points at k=" + std::to_string(k));
  SelectionResult r;
  r.strategy = "oracle";
  r.checkpoint_id = best->checkpoint_id;
  r.index = best->index;
  r.test_accuracy = best->mean_acc;
  return r;
}

/// Per trial, k points per class are drawn; v of them are held out for
/// validation and the predictor is trained on the other k - v. Draws are
/// shared across checkpoints. The checkpoint with the best mean validation
/// accuracy (ties: lower MSE) is chosen and its mean test accuracy reported.
inline SelectionResult select_by_validation(const Spectrum& spectrum, const DatasetBundle& data,
                                            const TaskSpec& task, std::size_t k, std::size_t v,
                                            std::uint64_t seed, std::size_t trials = 10,
                                            const PredictorConfig& pc = {}) {
  if (v < 1 || k <= v) throw ParameterError("select_by_validation: need k > v >= 1");
  if (spectrum.checkpoints.empty()) throw ContractError("select_by_validation: empty spectrum");
  task.validate(data.num_labels);
  const auto test_labels = task_labels(data.test_y, task);
  SelectionResult r;
  r.strategy = "validation";
  r.v = v;
  for (const auto& ckpt : spectrum.checkpoints) {
    FrozenEncoder enc(ckpt, data);
    double val_sum = 0, test_sum = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      CounterRng trial(trial_seed(seed, t));
      CounterRng draw = trial.split(1), init = trial.split(2), sampler = trial.split(3);
      const auto subset = sample_fewshot(data, task, k, draw);
      std::vector<std::size_t> fit_rows, val_rows;
      std::vector<int> fit_y, val_y;
      for (std::size_t i = 0; i < subset.indices.size(); ++i) {
        const bool held = i % k < v;
        (held ? val_rows : fit_rows).push_back(subset.indices[i]);
        (held ? val_y : fit_y).push_back(subset.labels[i]);
      }
      for (auto row : val_rows) {
        if (std::find(fit_rows.begin(), fit_rows.end(), row) != fit_rows.end()) {
          throw ContractError("select_by_validation: validation row leaked into the finetune subset");
        }
      }
      Tensor<float> zf = enc.encode_train(fit_rows, sampler.split(0));
      Tensor<float> zv = enc.encode_train(val_rows, sampler.split(2));
      Tensor<float> zt = enc.encode_test(sampler.split(1));
      if (pc.shift) {
        zf = shift_encodings(std::move(zf));
        zv = shift_encodings(std::move(zv));
        zt = shift_encodings(std::move(zt));
      }
      const auto run = train_predictor(zf, fit_y, task.num_classes, pc, init);
      val_sum += predictor_accuracy(run.model, zv, val_y);
      test_sum += predictor_accuracy(run.model, zt, test_labels);
    }
    r.validation_per_checkpoint.push_back(val_sum / static_cast<double>(trials));
    r.test_per_checkpoint.push_back(test_sum / static_cast<double>(trials));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < spectrum.checkpoints.size(); ++i) {
    const double a = r.validation_per_checkpoint[i], b = r.validation_per_checkpoint[best];
    if (a > b || (a == b && spectrum.checkpoints[i].test.mse < spectrum.checkpoints[best].test.mse)) best = i;
  }
  r.index = best;
  r.checkpoint_id = spectrum.checkpoints[best].id();
  r.validation_accuracy = r.validation_per_checkpoint[best];
  r.test_accuracy = r.test_per_checkpoint[best];
  return r;
}

struct TrendStats {
  double slope = 0;
  double intercept = 0;
  double t = 0;
  double p_value = 1;
  std::size_t points = 0;
};

inline TrendStats trend_stats(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("trend_stats: x/y length mismatch");
  TrendStats s;
  s.points = xs.size();
  if (s.points < 3) throw StatError("trend_stats: need at least 3 points below the cutoff");
  const double n = static_cast<double>(s.points);
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (std::adjacent_find(xs.begin(), xs.end(), std::not_equal_to<>()) == xs.end() || !(sxx > 0)) {
    throw StatError("trend_stats: all MSE values are equal");
  }
  s.slope = sxy / sxx;
  s.intercept = my - s.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - s.intercept - s.slope * xs[i];
    sse += r * r;
  }
  const double dof = n - 2;
  const double se = std::sqrt(sse / dof / sxx);
  if (se == 0) {
    s.t = s.slope == 0 ? 0 : std::copysign(std::numeric_limits<double>::infinity(), s.slope);
    s.p_value = s.slope == 0 ? 1 : 0;
    return s;
  }
  s.t = s.slope / se;
  boost::math::students_t dist(dof);
  s.p_value = 2 * boost::math::cdf(boost::math::complement(dist, std::abs(s.t)));
  return s;
}

/// OLS slope of accuracy on MSE over points with MSE < cutoff, with a
/// two-sided t-test on the slope.
inline TrendStats trend_stats(const std::vector<CurvePoint>& curve, double mse_cutoff) {
  std::vector<double> xs, ys;
  for (const auto& p : curve) {
    if (p.mse < mse_cutoff) {
      xs.push_back(p.mse);
      ys.push_back(p.mean_acc);
    }
  }
  return trend_stats(xs, ys);
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "spectrum_id,checkpoint_id,head,n,mse,k,task,mean_acc,stderr\n";
  char buf[512];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%zu,%.9g,%zu,%s,%.9g,%.9g\n", p.spectrum_id.c_str(),
                  p.checkpoint_id.c_str(), to_string(p.head).c_str(), p.n, p.mse, p.k, p.task.c_str(), p.mean_acc,
                  p.stderr_);
    out += buf;
  }
  return out;
}

inline nlohmann::json curve_json(const std::vector<CurvePoint>& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : curve) {
    arr.push_back({{"spectrum_id", p.spectrum_id}, {"checkpoint_id", p.checkpoint_id}, {"head", to_string(p.head)},
                   {"n", p.n}, {"mse", p.mse}, {"k", p.k}, {"task", p.task}, {"mean_acc", p.mean_acc},
                   {"stderr", p.stderr_}, {"accuracies", p.accuracies}});
  }
  return arr;
}

}  // namespace hga
