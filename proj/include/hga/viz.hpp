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
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"

#include "hga/data.hpp"
#include "hga/error.hpp"
#include "hga/evaluation.hpp"
#include "hga/models/encode.hpp"
#include "hga/pretrain.hpp"

namespace hga {

struct Prototype {
  std::size_t rank = 0;
  std::size_t index = 0;  ///< codebook row
  double frequency = 0;
  std::size_t slot = 0;   ///< sub-representation the entry was decoded in
  std::vector<float> latent;
  std::vector<float> decoded;
  std::optional<std::size_t> nearest_train_row;  ///< feature datasets only
};

struct PrototypeSet {
  std::vector<Prototype> prototypes;  ///< top entries by frequency
  double tail_frequency = 0;          ///< mass of entries not shown
  std::string pathway;                ///< "decoded" or "nearest_example"
  std::size_t height = 0, width = 0;
  bool modal_fill = false;            ///< n > 1: other slots hold their modal entries
};

/// Top `top` codebook entries by assignment frequency over `x`, each
/// decoded through D.
template <class T>
PrototypeSet decode_prototypes(const Triad<T>& model, const DatasetBundle& data, std::size_t top = 30) {
  if (!is_discrete(model.head())) throw UnsupportedHeadError("decode_prototypes: beta_vae has no codebook");
  if (model.decoder().layers.empty()) throw ContractError("decode_prototypes: model has no decoder");
  const auto& cfg = model.config();
  const std::size_t n = cfg.n, c = cfg.codebook_size, sd = cfg.sub_dim();
  const auto used = usage_indices(model, data.test_x.template cast<T>());
  std::vector<std::vector<double>> slot_counts(n, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < used.size(); ++i) slot_counts[i % n][used[i]] += 1.0;
  std::vector<double> freq(c, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < c; ++j) freq[j] += slot_counts[s][j] / static_cast<double>(used.size());
  }
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
  std::vector<std::size_t> modal(n);
  for (std::size_t s = 0; s < n; ++s) {
    modal[s] = static_cast<std::size_t>(
        std::max_element(slot_counts[s].begin(), slot_counts[s].end()) - slot_counts[s].begin());
  }
  PrototypeSet out;
  out.modal_fill = n > 1;
  out.pathway = data.image_shape.size() == 2 ? "decoded" : "nearest_example";
  if (data.image_shape.size() == 2) {
    out.height = data.image_shape[0];
    out.width = data.image_shape[1];
  }
  const auto& cb = model.codebook().value;
  std::optional<Encodings<T>> train;
  double shown = 0;
  for (std::size_t r = 0; r < std::min(top, c); ++r) {
    const std::size_t j = order[r];
    if (freq[j] <= 0) break;
    Prototype p;
    p.rank = r;
    p.index = j;
    p.frequency = freq[j];
    p.slot = 0;
    for (std::size_t s = 1; s < n; ++s) {
      if (slot_counts[s][j] > slot_counts[p.slot][j]) p.slot = s;
    }
    p.latent.resize(cfg.latent_dim);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t entry = s == p.slot ? j : modal[s];
      for (std::size_t d = 0; d < sd; ++d) p.latent[s * sd + d] = static_cast<float>(cb(entry, d));
    }
    ad::Graph<T> g;
    Tensor<T> zt({1, cfg.latent_dim});
    for (std::size_t d = 0; d < cfg.latent_dim; ++d) zt[d] = static_cast<T>(p.latent[d]);
    const auto& xh = decode(g.constant(zt), model).value();
    p.decoded.assign(xh.storage().begin(), xh.storage().end());
    if (out.pathway == "nearest_example") {
      double best = std::numeric_limits<double>::infinity();
      if (!train) train = encode_all(model, data.train_x.template cast<T>());
      for (std::size_t row = 0; row < train->h.rows(); ++row) {
        double d2 = 0;
        for (std::size_t d = 0; d < cfg.latent_dim; ++d) {
          const double diff = static_cast<double>(train->h(row, d)) - p.latent[d];
          d2 += diff * diff;
        }
        if (d2 < best) {
          best = d2;
          p.nearest_train_row = row;
        }
      }
    }
    shown += p.frequency;
    out.prototypes.push_back(std::move(p));
  }
  out.tail_frequency = std::max(0.0, 1.0 - shown);
  return out;
}

/// Binary PGM (P5); values are clamped to [0, 1].
inline std::string to_pgm(std::span<const float> pixels, std::size_t height, std::size_t width) {
  if (pixels.size() != height * width) throw DimensionError("to_pgm: pixel count does not match image shape");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (float v : pixels) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

struct PcaResult {
  std::vector<double> mean;
  std::vector<std::vector<double>> basis;  ///< 2 unit vectors of length Z
  std::vector<double> explained_variance;  ///< variance along each basis vector
  double total_variance = 0;
  bool degenerate = false;
  std::vector<std::size_t> sample_rows;  ///< training rows used
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;
  std::vector<std::size_t> prototype_index;
  std::vector<std::array<double, 2>> prototype_points;
  std::vector<std::size_t> prototype_nearest_row;  ///< nearest sampled training encoding

  nlohmann::json to_json() const {
    nlohmann::json j{{"mean", mean}, {"basis", basis}, {"explained_variance", explained_variance},
                     {"total_variance", total_variance}, {"degenerate", degenerate}};
    j["points"] = nlohmann::json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
      j["points"].push_back({{"row", sample_rows[i]}, {"label", labels[i]}, {"x", points[i][0]}, {"y", points[i][1]}});
    }
    j["prototypes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < prototype_points.size(); ++i) {
      j["prototypes"].push_back({{"index", prototype_index[i]}, {"x", prototype_points[i][0]},
                                 {"y", prototype_points[i][1]}, {"nearest_row", prototype_nearest_row[i]}});
    }
    return j;
  }
};

/// PCA of a set of row vectors; `degenerate` when fewer than two
/// directions carry variance, in which case the basis is the first two
/// coordinate axes.
inline PcaResult fit_pca(const Tensor<double>& rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  if (n == 0 || d < 2) throw DimensionError("fit_pca: need rows with at least 2 columns");
  Eigen::MatrixXd m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows(i, k);
  }
  const Eigen::RowVectorXd mu = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  PcaResult r;
  r.mean.assign(mu.data(), mu.data() + d);
  r.total_variance = cov.trace();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const auto& vals = eig.eigenvalues();  // ascending
  const double top = vals(static_cast<Eigen::Index>(d - 1)), second = vals(static_cast<Eigen::Index>(d - 2));
  r.degenerate = !(second > 1e-9 * std::max(1.0, top)) || eig.info() != Eigen::Success;
  r.basis.assign(2, std::vector<double>(d, 0.0));
  if (r.degenerate) {
    r.basis[0][0] = 1;
    r.basis[1][1] = 1;
  } else {
    for (std::size_t c = 0; c < 2; ++c) {
      Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - c));
      // Sign convention: largest-magnitude coordinate positive.
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      r.basis[c].assign(v.data(), v.data() + d);
    }
  }
  for (const auto& b : r.basis) {
    const Eigen::Map<const Eigen::VectorXd> bv(b.data(), static_cast<Eigen::Index>(d));
    r.explained_variance.push_back(bv.dot(cov * bv));
  }
  return r;
}

inline std::array<double, 2> pca_apply(const PcaResult& pca, std::span<const double> v) {
  std::array<double, 2> out{0, 0};
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < v.size(); ++k) out[c] += (v[k] - pca.mean[k]) * pca.basis[c][k];
  }
  return out;
}

/// PCA of continuous encodings h for `sample_n` training rows drawn with
/// `seed`; codebook prototypes (full latents as in decode_prototypes) are
/// projected into the same basis.
template <class T>
PcaResult pca_project(const Triad<T>& model, const DatasetBundle& data, std::size_t sample_n, std::uint64_t seed,
                      std::size_t top = 30) {
  const std::size_t n_train = data.train_x.rows();
  if (sample_n == 0 || sample_n > n_train) throw ParameterError("pca_project: sample_n must be in [1, train size]");
  std::vector<std::size_t> rows(n_train);
  std::iota(rows.begin(), rows.end(), 0);
  CounterRng rng(seed);
  for (std::size_t i = 0; i < sample_n; ++i) std::swap(rows[i], rows[i + rng.below(n_train - i)]);
  rows.resize(sample_n);
  std::sort(rows.begin(), rows.end());
  const auto enc = encode_all(model, data.train_x.rows_slice(rows).template cast<T>());
  const Tensor<double> h = enc.h.template cast<double>();
  PcaResult r = fit_pca(h);
  r.sample_rows = rows;
  for (std::size_t i = 0; i < sample_n; ++i) {
    r.points.push_back(pca_apply(r, h.row(i)));
    r.labels.push_back(data.train_y[rows[i]]);
  }
  if (is_discrete(model.head())) {
    const auto protos = decode_prototypes(model, data, top);
    for (const auto& p : protos.prototypes) {
      std::vector<double> lat(p.latent.begin(), p.latent.end());
      r.prototype_index.push_back(p.index);
      r.prototype_points.push_back(pca_apply(r, lat));
      std::size_t best_row = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < sample_n; ++i) {
        double d2 = 0;
        for (std::size_t k = 0; k < lat.size(); ++k) d2 += (h(i, k) - lat[k]) * (h(i, k) - lat[k]);
        if (d2 < best) {
          best = d2;
          best_row = rows[i];
        }
      }
      r.prototype_nearest_row.push_back(best_row);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Report

namespace detail {

inline const char* head_color(HeadKind h) {
  switch (h) {
    case HeadKind::kVqvibC: return "#1f77b4";
    case HeadKind::kVqvibN: return "#ff7f0e";
    case HeadKind::kBetaVae: return "#2ca02c";
  }
  return "#000000";
}

}  // namespace detail

/// Accuracy-vs-MSE chart: one polyline per (head, k), points pooled by
/// checkpoint position when several spectra share a head.
inline std::string curves_svg(const std::vector<CurvePoint>& curve) {
  const double w = 640, h = 400, left = 60, right = 20, top = 20, bottom = 50;
  std::map<std::pair<HeadKind, std::size_t>, std::vector<CurvePoint>> lines;
  for (const auto& p : curve) lines[{p.head, p.k}].push_back(p);
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!curve.empty()) {
    x0 = x1 = curve.front().mse;
    for (const auto& p : curve) {
      x0 = std::min(x0, p.mse);
      x1 = std::max(x1, p.mse);
    }
    if (x1 - x0 < 1e-12) {
      x0 -= 0.5;
      x1 += 0.5;
    }
  }
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double v) { return h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom); };
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                w, h, w, h);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n"
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n",
                left, h - bottom, w - right, h - bottom, left, top, left, h - bottom);
  s += buf;
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"middle\">%.4f</text>\n"
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" text-anchor=\"end\">%.2f</text>\n",
                  px(xv), h - bottom + 16, xv, left - 6, py(yv) + 4, yv);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" text-anchor=\"middle\">test MSE</text>\n"
                "<text x=\"14\" y=\"%.2f\" font-size=\"12\" transform=\"rotate(-90 14 %.2f)\" "
                "text-anchor=\"middle\">finetune accuracy</text>\n",
                (left + w - right) / 2, h - 12, (top + h - bottom) / 2, (top + h - bottom) / 2);
  s += buf;
  int legend = 0;
  for (auto& [key, pts] : lines) {
    auto pooled = pool_by_index(pts);
    std::sort(pooled.begin(), pooled.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.mse < b.mse; });
    std::snprintf(buf, sizeof buf, "<polyline class=\"%s-k%zu\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"",
                  to_string(key.first).c_str(), key.second, detail::head_color(key.first));
    s += buf;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(pooled[i].mse), py(pooled[i].mean_acc));
      s += buf;
    }
    s += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\" fill=\"%s\">%s k=%zu</text>\n", w - right - 120,
                  top + 14.0 * (legend + 1), detail::head_color(key.first), to_string(key.first).c_str(), key.second);
    s += buf;
    ++legend;
  }
  s += "</svg>\n";
  return s;
}

/// Writes index.json, prototypes/{ckpt}/{rank}.pgm, curves.csv,
/// curves.svg and pca/{ckpt}.json under `dir`.
inline nlohmann::json export_report(const std::vector<Spectrum>& spectra, const std::vector<CurvePoint>& curve,
                                    const DatasetBundle& data, const std::string& dir, std::uint64_t seed,
                                    std::size_t pca_samples = 1000) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  try {
    fs::create_directories(root / "prototypes");
    fs::create_directories(root / "pca");
  } catch (const fs::filesystem_error& e) {
    throw Error("cannot create report directory '" + dir + "': " + e.what());
  }
  nlohmann::json index{{"curves_csv", "curves.csv"}, {"curves_svg", "curves.svg"}};
  index["spectra"] = nlohmann::json::array();
  for (const auto& sp : spectra) {
    nlohmann::json js{{"id", sp.id}, {"head", to_string(sp.config.encoder.head)}, {"n", sp.config.encoder.n}};
    js["checkpoints"] = nlohmann::json::array();
    for (const auto& c : sp.checkpoints) {
      nlohmann::json jc{{"id", c.id()}, {"epoch", c.epoch}, {"test", metrics_json(c.test)}};
      if (is_discrete(c.model.head())) {
        const auto protos = decode_prototypes(c.model, data);
        jc["pathway"] = protos.pathway;
        jc["tail_frequency"] = protos.tail_frequency;
        jc["prototypes"] = nlohmann::json::array();
        const fs::path pdir = root / "prototypes" / c.id();
        if (protos.height) fs::create_directories(pdir);
        for (const auto& p : protos.prototypes) {
          nlohmann::json jp{{"rank", p.rank}, {"index", p.index}, {"frequency", p.frequency}, {"slot", p.slot}};
          if (protos.height) {
            const std::string rel = "prototypes/" + c.id() + "/" + std::to_string(p.rank) + ".pgm";
            detail::write_text(root / rel, to_pgm(p.decoded, protos.height, protos.width));
            jp["image"] = rel;
          }
          if (p.nearest_train_row) jp["nearest_train_row"] = *p.nearest_train_row;
          jc["prototypes"].push_back(jp);
        }
      }
      const std::string prel = "pca/" + c.id() + ".json";
      const auto pca = pca_project(c.model, data, std::min(pca_samples, data.train_x.rows()), seed);
      detail::write_text(root / prel, pca.to_json().dump() + "\n");
      jc["pca"] = prel;
      js["checkpoints"].push_back(jc);
    }
    index["spectra"].push_back(js);
  }
  detail::write_text(root / "curves.csv", curve_csv(curve));
  detail::write_text(root / "curves.svg", curves_svg(curve));
  detail::write_text(root / "index.json", index.dump(2) + "\n");
  return index;
}

}  // namespace hga
