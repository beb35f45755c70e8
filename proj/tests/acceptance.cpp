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

// Acceptance run: one PASS/FAIL line per criterion. FashionMNIST criteria
// use the 10k/2k fast mode; spectra and sweeps are cached under --cache so
// a rerun only recomputes what is missing. Exits 0 when it ran to the end.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fixtures.hpp"
#include "hga/autodiff/gradcheck.hpp"
#include "hga/evaluation.hpp"
#include "hga/models/encode.hpp"
#include "hga/objectives.hpp"
#include "hga/pretrain.hpp"

#ifndef HGA_FASHION_MNIST_DIR
#define HGA_FASHION_MNIST_DIR "data/fashion_mnist"
#endif
#ifndef HGA_CLI_PATH
#define HGA_CLI_PATH "hga"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using hga::CurvePoint;
using hga::HeadKind;
using Td = hga::Tensor<double>;

constexpr std::size_t kSeeds = 5;
constexpr std::size_t kTrials = 10;

struct Tally {
  int pass = 0, fail = 0;
  void line(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    (ok ? pass : fail)++;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- unit level

hga::EncoderConfig tiny_config(HeadKind head) {
  hga::EncoderConfig cfg;
  cfg.head = head;
  cfg.input_dim = 6;
  cfg.latent_dim = 8;
  cfg.n = 1;
  cfg.codebook_size = 5;
  cfg.extractor_widths = {7};
  cfg.decoder_widths = {3};
  cfg.predictor_hidden = 4;
  cfg.num_classes = 3;
  cfg.codebook_init_std = 0.5;
  return cfg;
}

void gradient_correctness(Tally& t) {
  hga::CounterRng xr(21);
  Td x({4, 6});
  for (auto& v : x.storage()) v = xr.normal();
  const std::vector<int> y{0, 2, 1, 2};
  const hga::LossWeights w{10, 10, 0.7, 0.3, 0.25};
  std::string detail;
  bool ok = true;
  for (auto head : {HeadKind::kVqvibC, HeadKind::kVqvibN, HeadKind::kBetaVae}) {
    hga::Triad<double> m(tiny_config(head), 13);
    const double err = hga::ad::check_gradients(
        [&](hga::ad::Graph<double>& g) {
          hga::CounterRng rng(99);
          auto xv = g.constant(x);
          auto enc = hga::encode(xv, m, &rng, hga::SampleMode::kSoft);
          return hga::compute_loss(m.head(), enc, hga::decode(enc.z, m), hga::predict_logits(enc.z, m), xv,
                                   std::span<const int>(y), w)
              .loss;
        },
        m.parameters());
    ok = ok && err < 1e-4;
    detail += fmt("%s max rel err %.2e; ", hga::to_string(head).c_str(), err);
  }
  t.line("gradient_correctness", ok, detail + "bound 1e-4");
}

void sampling_law(Tally& t) {
  constexpr std::size_t kDraws = 100000, kZ = 4, kC = 6;
  bool ok = true;
  double worst = 0;
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    hga::EncoderConfig cfg;
    cfg.head = HeadKind::kVqvibC;
    cfg.input_dim = kZ;
    cfg.latent_dim = kZ;
    cfg.codebook_size = kC;
    cfg.extractor_widths = {};
    cfg.decoder_widths = {2};
    cfg.predictor_hidden = 2;
    cfg.num_classes = 2;
    hga::Triad<double> m(cfg, 100 + inst);
    // Identity extractor so h is the input.
    for (auto& [name, p] : m.named_parameters()) {
      if (name == "extractor.0.w") {
        p->value = Td({kZ, kZ}, 0.0);
        for (std::size_t i = 0; i < kZ; ++i) p->value(i, i) = 1;
      } else if (name == "extractor.0.b") {
        p->value = Td({kZ}, 0.0);
      }
    }
    hga::CounterRng r(200 + inst);
    std::vector<double> h(kZ);
    for (auto& v : h) v = 0.7 * r.normal();
    Td x({kDraws, kZ});
    for (std::size_t i = 0; i < kDraws; ++i) {
      for (std::size_t j = 0; j < kZ; ++j) x(i, j) = h[j];
    }
    // Reference law computed directly from the distances.
    std::vector<double> p(kC);
    double norm = 0;
    for (std::size_t c = 0; c < kC; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < kZ; ++j) d += std::pow(h[j] - m.codebook().value(c, j), 2);
      p[c] = std::exp(-d);
      norm += p[c];
    }
    hga::CounterRng rng(300 + inst);
    hga::ad::Graph<double> g;
    const auto enc = hga::encode(g.constant(x), m, &rng, hga::SampleMode::kTrain);
    std::vector<double> hits(kC, 0);
    for (auto i : enc.indices) hits[i] += 1;
    for (std::size_t c = 0; c < kC; ++c) {
      const double pc = p[c] / norm, f = hits[c] / kDraws;
      const double sd = std::sqrt(pc * (1 - pc) / kDraws);
      const double z = sd > 0 ? std::abs(f - pc) / sd : (f == pc ? 0.0 : 1e9);
      worst = std::max(worst, z);
      ok = ok && z <= 3;
    }
  }
  t.line("sampling_law", ok, fmt("5 instances x 6 codes x 1e5 draws, worst |freq - p| = %.2f sigma (bound 3)", worst));
}

void closed_forms(Tally& t) {
  hga::ad::Graph<double> g;
  const double kl = hga::ad::kl_unit_gaussian(g.constant(Td::matrix({{1.0}})), g.constant(Td::matrix({{0.0}})))
                        .value()
                        .item();
  const double h4 =
      hga::ad::categorical_entropy(g.constant(Td::matrix({{0.25, 0.25, 0.25, 0.25}}))).value().item();
  double worst = 0;
  hga::CounterRng rng(5);
  for (int i = 0; i < 20; ++i) {
    const std::size_t c = 2 + i % 9;
    Td logits({1, c});
    for (auto& v : logits.storage()) v = 2 * rng.normal();
    const Td p = hga::ad::softmax(g.constant(logits)).value();
    double direct = 0;
    for (std::size_t j = 0; j < c; ++j) direct += p(0, j) * std::log(p(0, j) * static_cast<double>(c));
    const double via_h = std::log(static_cast<double>(c)) - hga::ad::categorical_entropy(g.constant(p)).value().item();
    worst = std::max(worst, std::abs(direct - via_h));
  }
  const bool ok = std::abs(kl - 0.5) < 1e-6 && std::abs(h4 - std::log(4.0)) < 1e-6 && worst < 1e-6;
  t.line("closed_form_values", ok,
         fmt("KL(N(1,1)|N(0,1)) = %.9f, H(U4) - ln 4 = %.1e, max |KL(P|U) - (ln C - H)| = %.1e", kl,
             h4 - std::log(4.0), worst));
}

// ---------------------------------------------------------------- spectra

struct Env {
  fs::path cache;
  std::string cli;
  std::string data_dir;
};

int run_cli(const Env& env, const std::string& args, const fs::path& stdout_file, const fs::path& stderr_file) {
  const std::string cmd = "\"" + env.cli + "\" " + args + " > \"" + stdout_file.string() + "\" 2> \"" +
                          stderr_file.string() + "\"";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

hga::TrainConfig fashion_config(const Env& env, HeadKind head) {
  hga::TrainConfig cfg;
  auto& e = cfg.encoder;
  e.head = head;
  e.input_dim = 784;
  e.latent_dim = 32;
  e.n = 1;
  e.codebook_size = 1000;
  e.extractor_widths = {256};
  e.decoder_widths = {256};
  e.predictor_hidden = 128;
  e.num_classes = 10;
  e.codebook_init_std = 0.5;
  cfg.weights = {10, 10, 0, 0, 0.25};
  cfg.schedule.warmup_epochs = 40;
  cfg.schedule.max_epochs = 200;
  if (head == HeadKind::kVqvibC) {
    cfg.schedule.knob = hga::AnnealKnob::kLambdaH;
    cfg.schedule.initial = 0.001;
    cfg.schedule.increment = 0.2;
  } else {
    cfg.schedule.knob = hga::AnnealKnob::kLambdaC;
    cfg.schedule.initial = 0.01;
    cfg.schedule.increment = 0.5;
  }
  cfg.dataset.kind = "fashion_mnist";
  cfg.dataset.path = env.data_dir;
  cfg.dataset.train_subset = 10000;
  cfg.dataset.test_subset = 2000;
  return cfg;
}

// Trains through the CLI unless the store already holds this exact config.
hga::Spectrum cached_spectrum(const Env& env, const hga::TrainConfig& cfg, std::uint64_t seed) {
  const std::string id = cfg.spectrum_id(seed);
  const fs::path store = env.cache / "store";
  const fs::path dir = store / "spectra" / id;
  const json cfg_json = cfg;
  if (fs::exists(dir / "spectrum.json") && hga::detail::read_json(dir / "spectrum.json").at("config") == cfg_json) {
    note("cached " + id);
    return hga::load_spectrum(dir.string());
  }
  fs::create_directories(env.cache / "configs");
  const fs::path cfg_file = env.cache / "configs" / (id + ".json");
  std::ofstream(cfg_file) << cfg_json.dump(2) << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run_cli(env,
                         "pretrain --config \"" + cfg_file.string() + "\" --seed " + std::to_string(seed) +
                             " --store \"" + store.string() + "\"",
                         env.cache / "configs" / (id + ".out"), env.cache / "configs" / (id + ".log"));
  if (rc != 0) throw hga::Error("pretrain " + id + " failed; see " + (env.cache / "configs" / (id + ".log")).string());
  note(fmt("trained %s in %.0f s", id.c_str(), seconds_since(t0)));
  return hga::load_spectrum(dir.string());
}

json curve_to_json(const std::vector<CurvePoint>& c) {
  json a = json::array();
  for (const auto& p : c) {
    a.push_back({{"spectrum_id", p.spectrum_id}, {"checkpoint_id", p.checkpoint_id}, {"index", p.index},
                 {"head", hga::to_string(p.head)}, {"n", p.n}, {"mse", p.mse}, {"k", p.k}, {"task", p.task},
                 {"mean_acc", p.mean_acc}, {"stderr", p.stderr_}, {"accuracies", p.accuracies}});
  }
  return a;
}

std::vector<CurvePoint> curve_from_json(const json& a) {
  std::vector<CurvePoint> out;
  for (const auto& p : a) {
    out.push_back({p.at("spectrum_id"), p.at("checkpoint_id"), p.at("index"), hga::head_from_string(p.at("head")),
                   p.at("n"), p.at("mse"), p.at("k"), p.at("task"), p.at("mean_acc"), p.at("stderr"),
                   p.at("accuracies").get<std::vector<double>>()});
  }
  return out;
}

std::vector<CurvePoint> cached_sweep(const Env& env, const hga::Spectrum& sp, const hga::DatasetBundle& data,
                                     std::size_t k) {
  const fs::path file = env.cache / "sweeps" / fmt("%s_k%zu_t%zu.json", sp.id.c_str(), k, kTrials);
  if (fs::exists(file)) return curve_from_json(hga::detail::read_json(file));
  const auto t0 = std::chrono::steady_clock::now();
  auto c = hga::sweep(sp, data, data.task("3way"), {k}, kTrials, 0);
  fs::create_directories(file.parent_path());
  std::ofstream(file) << curve_to_json(c).dump() << "\n";
  note(fmt("swept %s at k=%zu in %.0f s", sp.id.c_str(), k, seconds_since(t0)));
  return c;
}

hga::SelectionResult cached_validation(const Env& env, const hga::Spectrum& sp, const hga::DatasetBundle& data,
                                       std::size_t k) {
  const fs::path file = env.cache / "selection" / fmt("%s_k%zu_v1.json", sp.id.c_str(), k);
  hga::SelectionResult r;
  if (fs::exists(file)) {
    const auto j = hga::detail::read_json(file);
    r.checkpoint_id = j.at("checkpoint_id");
    r.index = j.at("index");
    r.test_accuracy = j.at("test_accuracy");
    r.validation_accuracy = j.at("validation_accuracy");
    return r;
  }
  r = hga::select_by_validation(sp, data, data.task("3way"), k, 1, 0, kTrials);
  fs::create_directories(file.parent_path());
  std::ofstream(file) << r.to_json().dump() << "\n";
  return r;
}

const CurvePoint& peak(const std::vector<CurvePoint>& c) {
  return *std::max_element(c.begin(), c.end(),
                           [](const CurvePoint& a, const CurvePoint& b) { return a.mean_acc < b.mean_acc; });
}

std::vector<CurvePoint> by_mse(std::vector<CurvePoint> c) {
  std::stable_sort(c.begin(), c.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.mse < b.mse; });
  return c;
}

std::string curve_text(const std::vector<CurvePoint>& c) {
  std::string s;
  for (const auto& p : by_mse(c)) s += fmt("%.4f:%.3f ", p.mse, p.mean_acc);
  return s;
}

double usage_entropy(const std::vector<double>& freq) {
  double h = 0;
  for (double f : freq) {
    if (f > 0) h -= f * std::log(f);
  }
  return h;
}

// Gap between best and worst mean accuracy over the lower-MSE half of the points.
double upper_half_gap(const std::vector<CurvePoint>& points) {
  const auto sorted = by_mse(points);
  const std::size_t half = (sorted.size() + 1) / 2;
  double lo = 1, hi = 0;
  for (std::size_t i = 0; i < half; ++i) {
    lo = std::min(lo, sorted[i].mean_acc);
    hi = std::max(hi, sorted[i].mean_acc);
  }
  return hi - lo;
}

void fashion_criteria(Tally& t, const Env& env) {
  const std::vector<std::string> names{"pretraining_convergence", "prototype_collapse_asymmetry",
                                       "nonmonotonic_finetune_curve", "head_ordering_k1", "validation_selection",
                                       "trend_statistic", "large_k_flattening"};
  const fs::path idx = fs::path(env.data_dir) / "train-images-idx3-ubyte";
  if (!fs::exists(idx) && !fs::exists(fs::path(idx.string() + ".gz"))) {
    for (const auto& n : names) t.line(n, false, "FashionMNIST IDX files not found in " + env.data_dir);
    return;
  }
  note("FashionMNIST fast mode: first 10000 train / 2000 test rows");
  std::vector<hga::Spectrum> cs;
  for (std::uint64_t s = 1; s <= kSeeds; ++s) cs.push_back(cached_spectrum(env, fashion_config(env, HeadKind::kVqvibC), s));
  const auto ns = cached_spectrum(env, fashion_config(env, HeadKind::kVqvibN), 1);
  const auto bs = cached_spectrum(env, fashion_config(env, HeadKind::kBetaVae), 1);
  const auto data = hga::load_dataset(cs.front().config.dataset);

  {
    bool ok = true;
    std::string d;
    for (const auto& sp : cs) {
      const double before = sp.checkpoints.front().test.accuracy, after = sp.checkpoints.back().test.accuracy;
      ok = ok && before >= 0.85 && after <= 0.12;
      d += fmt("s%zu %.3f->%.3f (%s); ", sp.seed, before, after, sp.stopped_by.c_str());
    }
    t.line("pretraining_convergence", ok, d + "need >= 0.85 at warmup end, <= 0.12 at the end");
  }

  {
    bool ok = true;
    std::string d = "vqvib_c final counts";
    for (const auto& sp : cs) {
      const auto c = sp.checkpoints.back().test.effective_count.value_or(0);
      ok = ok && c == 1;
      d += fmt(" %zu", c);
    }
    const auto& nlast = ns.checkpoints.back();
    const auto ncount = nlast.test.effective_count.value_or(0);
    ok = ok && ncount > 5;
    d += fmt("; vqvib_n final count %zu (need 1 and > 5)", ncount);
    t.line("prototype_collapse_asymmetry", ok, d);
    const auto freq = hga::effective_codebook_usage(nlast.model, data.test_x).frequencies;
    const auto used = std::count_if(freq.begin(), freq.end(), [](double f) { return f > 0; });
    const auto& nfirst = ns.checkpoints.front();
    const auto ffirst = hga::effective_codebook_usage(nfirst.model, data.test_x).frequencies;
    const auto used0 = std::count_if(ffirst.begin(), ffirst.end(), [](double f) { return f > 0; });
    note(fmt("vqvib_n sampled usage: warmup end count %zu, entropy %.2f nats, %zd codes used; final entropy %.2f "
             "nats, %zd codes used, max freq %.4f",
             nfirst.test.effective_count.value_or(0), usage_entropy(ffirst), used0, usage_entropy(freq), used,
             *std::max_element(freq.begin(), freq.end())));
    std::vector<double> mean_freq(nlast.model.config().codebook_size, 0.0);
    const auto mean_idx = hga::encode_all(nlast.model, data.test_x).indices;
    for (auto i : mean_idx) mean_freq[i] += 1.0 / static_cast<double>(mean_idx.size());
    note(fmt("vqvib_n final count from the Gaussian mean (no sampling): %zd",
             std::count_if(mean_freq.begin(), mean_freq.end(), [](double f) { return f > 0.01; })));
  }

  std::vector<CurvePoint> raw1, raw50;
  double mean_spectrum_peak = 0;
  for (const auto& sp : cs) {
    auto a = cached_sweep(env, sp, data, 1);
    auto b = cached_sweep(env, sp, data, 50);
    note(sp.id + " k=1 (mse:acc) " + curve_text(a));
    mean_spectrum_peak += peak(a).mean_acc / static_cast<double>(cs.size());
    raw1.insert(raw1.end(), a.begin(), a.end());
    raw50.insert(raw50.end(), b.begin(), b.end());
  }
  const auto& top = peak(raw1);
  {
    const auto sorted = by_mse(raw1);
    const auto& lo = sorted.front();
    const auto& hi = sorted.back();
    const bool interior = top.checkpoint_id != lo.checkpoint_id && top.checkpoint_id != hi.checkpoint_id;
    const bool ok = interior && top.mean_acc - lo.mean_acc >= 0.05 && top.mean_acc - hi.mean_acc >= 0.05 &&
                    top.mean_acc >= 0.60;
    t.line("nonmonotonic_finetune_curve", ok,
           fmt("%zu checkpoints over %zu spectra; peak %.3f at %s (mse %.4f); min-mse %.3f, max-mse %.3f; need "
               "interior, +0.05 over both, peak >= 0.60",
               raw1.size(), cs.size(), top.mean_acc, top.checkpoint_id.c_str(), top.mse, lo.mean_acc, hi.mean_acc));
  }
  {
    const auto nc = cached_sweep(env, ns, data, 1), bc = cached_sweep(env, bs, data, 1);
    note(ns.id + " k=1 (mse:acc) " + curve_text(nc));
    note(bs.id + " k=1 (mse:acc) " + curve_text(bc));
    const double pc = mean_spectrum_peak, pn = peak(nc).mean_acc, pb = peak(bc).mean_acc;
    t.line("head_ordering_k1", pc - pn >= 0.05 && pn - pb >= 0.05,
           fmt("per-spectrum peaks vqvib_c %.3f (mean of %zu) > vqvib_n %.3f > beta_vae %.3f, need gaps >= 0.05", pc,
               cs.size(), pn, pb));
  }
  {
    const std::vector<std::size_t> ks{2, 5, 10, 50};
    const std::vector<double> target{0.73, 0.89, 0.93, 0.97};
    std::vector<double> acc;
    std::string d;
    bool band = true;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      double s = 0;
      for (const auto& sp : cs) s += cached_validation(env, sp, data, ks[i]).test_accuracy;
      acc.push_back(s / static_cast<double>(cs.size()));
      band = band && std::abs(acc.back() - target[i]) <= 0.05;
      d += fmt("k=%zu %.3f (ref %.2f); ", ks[i], acc.back(), target[i]);
    }
    const bool monotone = std::is_sorted(acc.begin(), acc.end());
    const bool ok = monotone && acc.back() >= 0.92;
    t.line("validation_selection", ok,
           d + (monotone ? "monotone" : "not monotone") + fmt(", k=50 floor 0.92, all within 0.05 of ref: %s",
                                                             band ? "yes" : "no"));
  }
  {
    try {
      const auto st = hga::trend_stats(raw1, top.mse);
      t.line("trend_statistic", st.slope > 0 && st.p_value < 0.05,
             fmt("k=1 vqvib_c, %zu checkpoints with mse < %.4f: slope %.3f, p %.4g (need > 0, < 0.05)", st.points,
                 top.mse, st.slope, st.p_value));
    } catch (const hga::Error& e) {
      t.line("trend_statistic", false, std::string("no regression: ") + e.what());
    }
  }
  {
    const double g1 = upper_half_gap(raw1), g50 = upper_half_gap(raw50);
    t.line("large_k_flattening", g50 < g1,
           fmt("max-min mean accuracy over the lower-mse half of %zu checkpoints: k=50 %.3f vs k=1 %.3f",
               raw1.size(), g50, g1));
  }
}

// ---------------------------------------------------------------- reproducibility

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

void reproducibility(Tally& t, const Env& env) {
  const fs::path root = env.cache / "repro";
  fs::remove_all(root);
  fs::create_directories(root);
  auto cfg = hga::test::synthetic_config();
  cfg.schedule.max_epochs = 45;
  std::ofstream(root / "pretrain.json") << json(cfg).dump(2) << "\n";
  const std::string sid = cfg.spectrum_id(3);
  std::ofstream(root / "finetune.json")
      << json{{"checkpoint_id", sid + "-c01"}, {"task", "coarse"}, {"k", 2}, {"trials", 3}}.dump() << "\n";
  std::ofstream(root / "sweep.json")
      << json{{"k_values", {1, 5}}, {"trials", 2}, {"task", "coarse"}}.dump() << "\n";
  std::vector<std::string> diffs;
  std::size_t compared = 0;
  for (int run = 0; run < 2; ++run) {
    const fs::path r = root / ("run" + std::to_string(run));
    const std::string store = "--store \"" + (r / "store").string() + "\"";
    const std::vector<std::pair<std::string, std::string>> cmds{
        {"pretrain", "pretrain --config \"" + (root / "pretrain.json").string() + "\" --seed 3 " + store},
        {"finetune", "finetune --config \"" + (root / "finetune.json").string() + "\" --seed 4 " + store +
                         " --out \"" + (r / "finetune.json").string() + "\""},
        {"sweep", "sweep --config \"" + (root / "sweep.json").string() + "\" --seed 5 " + store + " --out \"" +
                      (r / "sweep").string() + "\""},
        {"export", "export --seed 6 " + store + " --out \"" + (r / "report").string() + "\""},
    };
    fs::create_directories(r / "logs");
    for (const auto& [name, args] : cmds) {
      if (run_cli(env, args, r / "logs" / (name + ".out"), r / "logs" / (name + ".err")) != 0) {
        diffs.push_back(name + " exited non-zero");
      }
    }
  }
  auto a = tree(root / "run0"), b = tree(root / "run1");
  // Printed paths name the run directory; everything else must match byte for byte.
  for (auto* m : {&a, &b}) {
    m->erase("logs/pretrain.out");
    m->erase("logs/export.out");
  }
  for (const auto& [rel, text] : a) {
    ++compared;
    auto it = b.find(rel);
    if (it == b.end() || it->second != text) diffs.push_back(rel);
  }
  for (const auto& [rel, text] : b) {
    if (!a.count(rel)) diffs.push_back(rel);
  }
  std::string d = fmt("pretrain/finetune/sweep/export twice on synthetic data, %zu files compared", compared);
  if (!diffs.empty()) d += "; differ: " + diffs.front() + (diffs.size() > 1 ? fmt(" and %zu more", diffs.size() - 1) : "");
  t.line("reproducibility", diffs.empty() && compared > 10, d);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  Env env;
  std::string cache = "acceptance_cache";
  env.cli = HGA_CLI_PATH;
  env.data_dir = HGA_FASHION_MNIST_DIR;
  app.add_option("--cache", cache, "cache directory for spectra and sweeps");
  app.add_option("--cli", env.cli, "hga executable");
  app.add_option("--data", env.data_dir, "FashionMNIST IDX directory");
  CLI11_PARSE(app, argc, argv);
  env.cache = fs::absolute(cache);
  env.data_dir = fs::absolute(env.data_dir).string();
  fs::create_directories(env.cache);

  const auto t0 = std::chrono::steady_clock::now();
  Tally t;
  try {
    gradient_correctness(t);
    sampling_law(t);
    closed_forms(t);
    fashion_criteria(t, env);
    reproducibility(t, env);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d passed, %d failed in %.0f s\n", t.pass, t.fail, seconds_since(t0));
  return 0;
}
