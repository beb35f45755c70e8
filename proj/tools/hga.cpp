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

// Command-line front end: pretrain, finetune, sweep, export, serve.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hga/data.hpp"
#include "hga/evaluation.hpp"
#include "hga/finetune.hpp"
#include "hga/pretrain.hpp"
#include "hga/service.hpp"
#include "hga/viz.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw hga::ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw hga::ConfigError("config '" + path + "': " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  hga::detail::write_text(p, text);
}

fs::path spectrum_dir(const std::string& store, const std::string& id) { return fs::path(store) / "spectra" / id; }

std::string pick(const std::string& flag, const json& cfg, const char* key, const std::string& fallback) {
  if (!flag.empty()) return flag;
  return cfg.value(key, fallback);
}

int cmd_pretrain(const json& cfg_json, std::uint64_t seed, const std::string& store, bool quiet) {
  auto cfg = cfg_json.get<hga::TrainConfig>();
  const auto data = hga::load_dataset(cfg.dataset);
  hga::PretrainHooks hooks;
  if (!quiet) {
    hooks.on_epoch = [](const hga::EpochRecord& r) {
      std::fprintf(stderr, "epoch %3zu  knob %.4f  loss %.4f  test mse %.5f  acc %.4f  prototypes %zu\n", r.epoch,
                   r.knob_value, r.train_loss, r.test.mse, r.test.accuracy, r.test.effective_count.value_or(0));
    };
  }
  const auto spectrum = hga::pretrain(cfg, data, seed, hooks);
  const auto dir = spectrum_dir(store, spectrum.id);
  hga::save_spectrum(spectrum, dir.string());
  for (const auto& w : spectrum.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("%s\n", json{{"spectrum_id", spectrum.id}, {"dir", dir.string()},
                           {"checkpoints", spectrum.checkpoints.size()}, {"stopped_by", spectrum.stopped_by}}
                          .dump()
                          .c_str());
  return 0;
}

hga::TaskSpec task_from(const json& cfg, const hga::DatasetBundle& data, hga::service::Store& store) {
  const auto& t = cfg.at("task");
  if (t.is_string()) return store.resolve_task(t.get<std::string>(), data);
  return hga::TaskSpec::from_map(t.value("name", std::string("task")), t.at("grouping"), data.num_labels);
}

hga::PredictorConfig predictor_from(const json& cfg) {
  return cfg.contains("predictor") ? cfg["predictor"].get<hga::PredictorConfig>() : hga::PredictorConfig{};
}

int cmd_finetune(const json& cfg, std::uint64_t seed, const std::string& store_root, const std::string& out) {
  hga::service::Store store(store_root);
  auto [sp, ckpt] = store.checkpoint(cfg.at("checkpoint_id").get<std::string>());
  const auto data = store.dataset(sp->config.dataset);
  hga::FewShotJob job;
  job.task = task_from(cfg, *data, store);
  job.k = cfg.value("k", std::size_t{1});
  job.trials = cfg.value("trials", std::size_t{10});
  job.seed = seed;
  job.predictor = predictor_from(cfg);
  const auto result = hga::run_job(job, *ckpt, *data).to_json();
  const std::string text = result.dump(2) + "\n";
  if (!out.empty()) write_text(out, text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_sweep(const json& cfg, std::uint64_t seed, const std::string& store_root, const std::string& out) {
  hga::service::Store store(store_root);
  std::vector<std::string> ids = cfg.value("spectra", std::vector<std::string>{});
  if (ids.empty()) {
    for (const auto& m : store.manifests()) ids.push_back(m.at("id").get<std::string>());
  }
  const auto ks = cfg.value("k_values", std::vector<std::size_t>{1, 2, 5, 10, 50});
  const std::size_t trials = cfg.value("trials", std::size_t{10});
  const auto pc = predictor_from(cfg);
  std::vector<hga::CurvePoint> curve;
  for (const auto& id : ids) {
    const auto sp = store.spectrum(id);
    const auto data = store.dataset(sp->config.dataset);
    const auto task = task_from(cfg, *data, store);
    std::fprintf(stderr, "sweeping %s (%zu checkpoints)\n", id.c_str(), sp->checkpoints.size());
    auto pts = hga::sweep(*sp, *data, task, ks, trials, seed, pc);
    curve.insert(curve.end(), pts.begin(), pts.end());
  }
  const fs::path dir = out.empty() ? fs::path("sweep") : fs::path(out);
  write_text(dir / "curves.csv", hga::curve_csv(curve));
  write_text(dir / "curves.json", hga::curve_json(curve).dump(2) + "\n");
  std::fputs(hga::curve_csv(curve).c_str(), stdout);
  return 0;
}

std::vector<hga::CurvePoint> curve_from_json(const json& arr) {
  std::vector<hga::CurvePoint> out;
  for (const auto& p : arr) {
    hga::CurvePoint c;
    c.spectrum_id = p.at("spectrum_id");
    c.checkpoint_id = p.at("checkpoint_id");
    c.head = hga::head_from_string(p.at("head"));
    c.n = p.at("n");
    c.mse = p.at("mse");
    c.k = p.at("k");
    c.task = p.at("task");
    c.mean_acc = p.at("mean_acc");
    c.stderr_ = p.at("stderr");
    c.accuracies = p.value("accuracies", std::vector<double>{});
    const auto pos = c.checkpoint_id.rfind("-c");
    c.index = pos == std::string::npos ? 0 : std::stoul(c.checkpoint_id.substr(pos + 2));
    out.push_back(std::move(c));
  }
  return out;
}

int cmd_export(const json& cfg, std::uint64_t seed, const std::string& store_root, const std::string& out) {
  hga::service::Store store(store_root);
  std::vector<std::string> ids = cfg.value("spectra", std::vector<std::string>{});
  if (ids.empty()) {
    for (const auto& m : store.manifests()) ids.push_back(m.at("id").get<std::string>());
  }
  std::vector<hga::Spectrum> spectra;
  for (const auto& id : ids) spectra.push_back(*store.spectrum(id));
  std::vector<hga::CurvePoint> curve;
  if (cfg.contains("curves")) curve = curve_from_json(hga::detail::read_json(cfg["curves"].get<std::string>()));
  const fs::path dir = out.empty() ? fs::path("report") : fs::path(out);
  hga::DatasetBundle data;
  if (!spectra.empty()) data = *store.dataset(spectra.front().config.dataset);
  hga::export_report(spectra, curve, data, dir.string(), seed, cfg.value("pca_samples", std::size_t{1000}));
  std::printf("%s\n", dir.string().c_str());
  return 0;
}

int cmd_serve(const json& cfg, const std::string& store_root, int port) {
  hga::service::ServiceOptions opts;
  opts.workers = cfg.value("workers", opts.workers);
  opts.pca_samples = cfg.value("pca_samples", opts.pca_samples);
  opts.static_dir = cfg.value("static_dir", opts.static_dir);
  hga::service::Service svc(store_root, opts);
  const std::string host = cfg.value("host", std::string("127.0.0.1"));
  std::fprintf(stderr, "serving %s on http://%s:%d\n", store_root.c_str(), host.c_str(), port);
  return svc.listen(host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hga: complexity spectra of discrete encoders"};
  app.require_subcommand(1);
  std::string config, store, out;
  std::uint64_t seed = 0;
  int port = 8080;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON config file");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--store", store, "artifact store directory");
  };
  auto* pre = app.add_subcommand("pretrain", "train and anneal one spectrum");
  add_common(pre);
  pre->add_flag("--quiet", quiet, "no per-epoch progress");
  auto* ft = app.add_subcommand("finetune", "few-shot finetune one checkpoint");
  add_common(ft);
  ft->add_option("--out", out, "result JSON path");
  auto* sw = app.add_subcommand("sweep", "finetune every checkpoint of stored spectra");
  add_common(sw);
  sw->add_option("--out", out, "output directory");
  auto* ex = app.add_subcommand("export", "write a report directory");
  add_common(ex);
  ex->add_option("--out", out, "report directory");
  auto* sv = app.add_subcommand("serve", "HTTP API over a store");
  add_common(sv);
  sv->add_option("--port", port, "listen port");

  CLI11_PARSE(app, argc, argv);
  try {
    const json cfg = read_config(config);
    const std::string st = pick(store, cfg, "store", "store");
    if (*pre) return cmd_pretrain(cfg, seed, st, quiet);
    if (*ft) return cmd_finetune(cfg, seed, st, pick(out, cfg, "out", ""));
    if (*sw) return cmd_sweep(cfg, seed, st, pick(out, cfg, "out", ""));
    if (*ex) return cmd_export(cfg, seed, st, pick(out, cfg, "out", ""));
    if (*sv) return cmd_serve(cfg, st, port);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
