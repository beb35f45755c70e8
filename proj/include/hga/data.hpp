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
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "hga/autodiff/tensor.hpp"
#include "hga/binary_io.hpp"
#include "hga/error.hpp"
#include "hga/rng.hpp"

namespace hga {

/// Maps every low-level label to a finetuning class.
struct TaskSpec {
  std::string name;
  std::vector<int> grouping;  ///< grouping[label] = class id
  std::size_t num_classes = 0;  ///< M
  std::vector<std::string> class_names;

  /// Totality over `num_labels`, contiguous class ids, and M >= 2.
  void validate(std::size_t num_labels) const {
    if (grouping.size() != num_labels) {
      throw ValidationError("task '" + name + "': grouping covers " + std::to_string(grouping.size()) +
                            " of " + std::to_string(num_labels) + " labels");
    }
    std::set<int> used(grouping.begin(), grouping.end());
    if (used.size() < 2) throw ValidationError("task '" + name + "': needs at least 2 classes");
    if (*used.begin() != 0 || *used.rbegin() != static_cast<int>(used.size()) - 1 ||
        used.size() != num_classes) {
      throw ValidationError("task '" + name + "': class ids must be 0..M-1 with every class used");
    }
  }

  int map(int label) const { return grouping.at(static_cast<std::size_t>(label)); }

  static TaskSpec identity(std::string name, std::size_t num_labels) {
    TaskSpec t{std::move(name), std::vector<int>(num_labels), num_labels, {}};
    std::iota(t.grouping.begin(), t.grouping.end(), 0);
    return t;
  }

  /// From a {"label": class} map; labels are decimal strings.
  static TaskSpec from_map(std::string name, const nlohmann::json& m, std::size_t num_labels) {
    TaskSpec t;
    t.name = std::move(name);
    t.grouping.assign(num_labels, -1);
    for (const auto& [key, cls] : m.items()) {
      std::size_t label = 0;
      try {
        label = std::stoul(key);
      } catch (const std::exception&) {
        throw ValidationError("task '" + t.name + "': label key '" + key + "' is not an integer");
      }
      if (label >= num_labels) throw ValidationError("task '" + t.name + "': unknown label " + key);
      if (t.grouping[label] != -1) throw ValidationError("task '" + t.name + "': label " + key + " mapped twice");
      t.grouping[label] = cls.get<int>();
    }
    for (std::size_t l = 0; l < num_labels; ++l) {
      if (t.grouping[l] < 0) throw ValidationError("task '" + t.name + "': label " + std::to_string(l) + " is unassigned");
    }
    t.num_classes = std::set<int>(t.grouping.begin(), t.grouping.end()).size();
    t.validate(num_labels);
    return t;
  }

  nlohmann::json grouping_json() const {
    nlohmann::json m = nlohmann::json::object();
    for (std::size_t l = 0; l < grouping.size(); ++l) m[std::to_string(l)] = grouping[l];
    return m;
  }
};

struct Normalization {
  std::string kind = "none";  ///< "unit_range", "standardized" or "none"
  std::vector<float> offset;  ///< per feature, subtracted
  std::vector<float> scale;   ///< per feature, divided

  nlohmann::json to_json() const { return {{"kind", kind}, {"offset", offset}, {"scale", scale}}; }
  static Normalization from_json(const nlohmann::json& j) {
    Normalization n;
    n.kind = j.value("kind", std::string("none"));
    n.offset = j.value("offset", std::vector<float>{});
    n.scale = j.value("scale", std::vector<float>{});
    return n;
  }
};

struct DatasetBundle {
  std::string name;
  std::string provenance;
  Tensor<float> train_x;
  Tensor<float> test_x;
  std::vector<int> train_y;
  std::vector<int> test_y;
  std::vector<std::size_t> train_ids;  ///< source row ids, disjoint from test_ids
  std::vector<std::size_t> test_ids;
  std::size_t num_labels = 0;
  std::vector<std::string> label_names;
  std::map<std::string, TaskSpec> groupings;
  Normalization normalization;
  std::vector<std::size_t> image_shape;  ///< {H, W} for image data, empty otherwise

  std::size_t dim() const { return train_x.cols(); }

  const TaskSpec& task(const std::string& key) const {
    auto it = groupings.find(key);
    if (it == groupings.end()) throw DataError("dataset '" + name + "' has no grouping '" + key + "'");
    return it->second;
  }

  /// Shape consistency, label ranges, grouping totality, split disjointness.
  void validate() const {
    if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size()) {
      throw DataError("dataset '" + name + "': feature/label count mismatch");
    }
    if (train_x.cols() != test_x.cols()) throw DataError("dataset '" + name + "': split dims differ");
    for (const auto* ys : {&train_y, &test_y}) {
      for (int y : *ys) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_labels) {
          throw DataError("dataset '" + name + "': label " + std::to_string(y) + " out of range");
        }
      }
    }
    for (const auto& [key, t] : groupings) t.validate(num_labels);
    if (train_ids.size() != train_y.size() || test_ids.size() != test_y.size()) {
      throw DataError("dataset '" + name + "': split ids missing");
    }
    std::vector<std::size_t> a = train_ids, b = test_ids;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) throw DataError("dataset '" + name + "': train/test splits overlap");
  }

  /// First n_train / n_test rows of each split (0 keeps the split whole).
  DatasetBundle subset(std::size_t n_train, std::size_t n_test) const {
    DatasetBundle out = *this;
    auto cut = [](Tensor<float>& x, std::vector<int>& y, std::vector<std::size_t>& ids, std::size_t n) {
      if (n == 0 || n >= y.size()) return;
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      x = x.rows_slice(idx);
      y.resize(n);
      ids.resize(n);
    };
    cut(out.train_x, out.train_y, out.train_ids, n_train);
    cut(out.test_x, out.test_y, out.test_ids, n_test);
    if (n_train || n_test) {
      out.provenance += " (subset " + std::to_string(out.train_y.size()) + "/" +
                        std::to_string(out.test_y.size()) + ")";
    }
    return out;
  }

  /// Mean per-element variance of the training features: the MSE of a
  /// reconstruction that always outputs the mean input.
  double feature_variance() const {
    const std::size_t n = train_x.rows(), d = train_x.cols();
    double total = 0;
    for (std::size_t c = 0; c < d; ++c) {
      double m = 0, s = 0;
      for (std::size_t r = 0; r < n; ++r) m += train_x(r, c);
      m /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) s += (train_x(r, c) - m) * (train_x(r, c) - m);
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(d);
  }
};

// ---------------------------------------------------------------------------
// Synthetic hierarchy

struct HierarchySpec {
  std::size_t n_coarse = 3;
  std::size_t children = 3;
  std::size_t train_per_leaf = 200;
  std::size_t test_per_leaf = 100;
  std::size_t dim = 16;
  double sigma = 0.5;          ///< intra-leaf noise
  double leaf_spread = 2.0;    ///< leaf centers around their coarse center
  double coarse_spread = 6.0;  ///< coarse centers around the origin

  void validate() const {
    if (!(coarse_spread > leaf_spread && leaf_spread > sigma && sigma >= 0)) {
      throw ConfigError("hierarchy spec must satisfy coarse_spread > leaf_spread > sigma >= 0");
    }
    if (n_coarse < 2 || children < 1 || train_per_leaf < 1 || dim < 1) {
      throw ConfigError("hierarchy spec: need >= 2 coarse classes and non-empty leaves");
    }
  }
};

inline void to_json(nlohmann::json& j, const HierarchySpec& s) {
  j = {{"n_coarse", s.n_coarse}, {"children", s.children}, {"train_per_leaf", s.train_per_leaf},
       {"test_per_leaf", s.test_per_leaf}, {"dim", s.dim}, {"sigma", s.sigma},
       {"leaf_spread", s.leaf_spread}, {"coarse_spread", s.coarse_spread}};
}
inline void from_json(const nlohmann::json& j, HierarchySpec& s) {
  HierarchySpec d;
  s.n_coarse = j.value("n_coarse", d.n_coarse);
  s.children = j.value("children", d.children);
  s.train_per_leaf = j.value("train_per_leaf", d.train_per_leaf);
  s.test_per_leaf = j.value("test_per_leaf", d.test_per_leaf);
  s.dim = j.value("dim", d.dim);
  s.sigma = j.value("sigma", d.sigma);
  s.leaf_spread = j.value("leaf_spread", d.leaf_spread);
  s.coarse_spread = j.value("coarse_spread", d.coarse_spread);
}

struct SyntheticCenters {
  std::vector<std::vector<double>> coarse;
  std::vector<std::vector<double>> leaf;
};

/// Gaussian hierarchy: coarse centers ~ N(0, coarse_spread^2), leaf centers
/// around them with leaf_spread, points around leaves with sigma. Labels are
/// leaves ("fine"); the "coarse" grouping maps leaves to their parent.
/// Points are interleaved across leaves and the splits are drawn separately.
inline DatasetBundle generate_synthetic(const HierarchySpec& spec, std::uint64_t seed,
                                        SyntheticCenters* centers_out = nullptr) {
  spec.validate();
  CounterRng rng(seed);
  const std::size_t leaves = spec.n_coarse * spec.children;
  SyntheticCenters centers;
  for (std::size_t c = 0; c < spec.n_coarse; ++c) {
    std::vector<double> cc(spec.dim);
    for (auto& v : cc) v = rng.normal() * spec.coarse_spread;
    centers.coarse.push_back(cc);
    for (std::size_t k = 0; k < spec.children; ++k) {
      std::vector<double> lc(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d) lc[d] = cc[d] + rng.normal() * spec.leaf_spread;
      centers.leaf.push_back(lc);
    }
  }
  DatasetBundle b;
  b.name = "synthetic";
  b.provenance = "synthetic hierarchy seed=" + std::to_string(seed) + " " + nlohmann::json(spec).dump();
  b.num_labels = leaves;
  auto draw = [&](std::size_t per_leaf, Tensor<float>& x, std::vector<int>& y,
                  std::vector<std::size_t>& ids, std::size_t id_base) {
    x = Tensor<float>({per_leaf * leaves, spec.dim});
    std::size_t row = 0;
    for (std::size_t i = 0; i < per_leaf; ++i) {
      for (std::size_t l = 0; l < leaves; ++l, ++row) {
        for (std::size_t d = 0; d < spec.dim; ++d) {
          x(row, d) = static_cast<float>(centers.leaf[l][d] + rng.normal() * spec.sigma);
        }
        y.push_back(static_cast<int>(l));
        ids.push_back(id_base + row);
      }
    }
  };
  draw(spec.train_per_leaf, b.train_x, b.train_y, b.train_ids, 0);
  draw(spec.test_per_leaf, b.test_x, b.test_y, b.test_ids, spec.train_per_leaf * leaves);

  // Standardize every feature with training statistics.
  b.normalization.kind = "standardized";
  for (std::size_t d = 0; d < spec.dim; ++d) {
    double m = 0, s = 0;
    for (std::size_t r = 0; r < b.train_x.rows(); ++r) m += b.train_x(r, d);
    m /= static_cast<double>(b.train_x.rows());
    for (std::size_t r = 0; r < b.train_x.rows(); ++r) s += (b.train_x(r, d) - m) * (b.train_x(r, d) - m);
    s = std::sqrt(s / static_cast<double>(b.train_x.rows()));
    if (s <= 0) s = 1;
    b.normalization.offset.push_back(static_cast<float>(m));
    b.normalization.scale.push_back(static_cast<float>(s));
    for (auto* x : {&b.train_x, &b.test_x}) {
      for (std::size_t r = 0; r < x->rows(); ++r) (*x)(r, d) = static_cast<float>(((*x)(r, d) - m) / s);
    }
  }
  for (std::size_t l = 0; l < leaves; ++l) b.label_names.push_back("leaf" + std::to_string(l));
  b.groupings["fine"] = TaskSpec::identity("fine", leaves);
  TaskSpec coarse{"coarse", std::vector<int>(leaves), spec.n_coarse, {}};
  for (std::size_t l = 0; l < leaves; ++l) coarse.grouping[l] = static_cast<int>(l / spec.children);
  for (std::size_t c = 0; c < spec.n_coarse; ++c) coarse.class_names.push_back("coarse" + std::to_string(c));
  b.groupings["coarse"] = coarse;
  b.validate();
  if (centers_out) *centers_out = std::move(centers);
  return b;
}

// ---------------------------------------------------------------------------
// FashionMNIST (IDX)

/// FashionMNIST label names in label order.
inline const std::vector<std::string>& fashion_label_names() {
  static const std::vector<std::string> names{"T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
                                              "Sandal",      "Shirt",   "Sneaker",  "Bag",   "Ankle boot"};
  return names;
}

/// tops = {T-shirt/top, Pullover, Coat, Shirt}; shoes = {Sandal, Sneaker,
/// Ankle boot}; other = {Trouser, Dress, Bag}.
inline TaskSpec fashion_three_way() {
  return TaskSpec{"3way", {0, 2, 0, 2, 0, 1, 0, 1, 2, 1}, 3, {"tops", "shoes", "other"}};
}

/// Deliberately non-semantic 3-way grouping (non-canonical): {Pullover,
/// Dress, Sneaker}, {T-shirt/top, Trouser, Sandal, Bag}, {Coat, Shirt, Ankle boot}.
inline TaskSpec fashion_unintuitive_three_way() {
  return TaskSpec{"unintuitive3", {1, 1, 0, 0, 2, 1, 2, 0, 1, 2}, 3, {"groupA", "groupB", "groupC"}};
}

namespace detail {

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

inline std::string find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* ext : {"", ".gz"}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p.string();
  }
  throw DataError("missing IDX file '" + (dir / stem).string() + "'");
}

inline Tensor<float> read_idx_images(const std::string& path) {
  const auto bytes = io::read_maybe_gzip(path);
  if (bytes.size() < 16 || be32(bytes, 0) != 0x00000803u) throw DataError("corrupt IDX image file '" + path + "'");
  const std::size_t n = be32(bytes, 4), h = be32(bytes, 8), w = be32(bytes, 12);
  if (bytes.size() != 16 + n * h * w) throw DataError("corrupt IDX image file '" + path + "': size mismatch");
  Tensor<float> x({n, h * w});
  for (std::size_t i = 0; i < n * h * w; ++i) x[i] = static_cast<float>(bytes[16 + i]) / 255.0f;
  return x;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
  const auto bytes = io::read_maybe_gzip(path);
  if (bytes.size() < 8 || be32(bytes, 0) != 0x00000801u) throw DataError("corrupt IDX label file '" + path + "'");
  const std::size_t n = be32(bytes, 4);
  if (bytes.size() != 8 + n) throw DataError("corrupt IDX label file '" + path + "': size mismatch");
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = bytes[8 + i];
    if (y[i] > 9) throw DataError("corrupt IDX label file '" + path + "': label out of range");
  }
  return y;
}

}  // namespace detail

/// Reads the four standard IDX files (optionally gzipped) from `dir`.
inline DatasetBundle load_fashion_mnist(const std::string& dir) {
  const std::filesystem::path d(dir);
  DatasetBundle b;
  b.name = "fashion_mnist";
  b.train_x = detail::read_idx_images(detail::find_idx(d, "train-images-idx3-ubyte"));
  b.train_y = detail::read_idx_labels(detail::find_idx(d, "train-labels-idx1-ubyte"));
  b.test_x = detail::read_idx_images(detail::find_idx(d, "t10k-images-idx3-ubyte"));
  b.test_y = detail::read_idx_labels(detail::find_idx(d, "t10k-labels-idx1-ubyte"));
  if (b.train_x.rows() != b.train_y.size() || b.test_x.rows() != b.test_y.size()) {
    throw DataError("IDX image/label counts differ in '" + dir + "'");
  }
  b.train_ids.resize(b.train_y.size());
  std::iota(b.train_ids.begin(), b.train_ids.end(), 0);
  b.test_ids.resize(b.test_y.size());
  std::iota(b.test_ids.begin(), b.test_ids.end(), b.train_y.size());
  b.num_labels = 10;
  b.label_names = fashion_label_names();
  b.image_shape = {28, 28};
  b.normalization.kind = "unit_range";
  b.provenance = "idx:" + std::filesystem::absolute(d).string();
  auto ten = TaskSpec::identity("10way", 10);
  ten.class_names = fashion_label_names();
  b.groupings["10way"] = ten;
  b.groupings["3way"] = fashion_three_way();
  b.groupings["unintuitive3"] = fashion_unintuitive_three_way();
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// HFD precomputed features

namespace detail {

inline std::vector<std::uint8_t> hfd_encode(const Tensor<float>& x, std::span<const int> y) {
  io::ByteWriter w;
  w.bytes("HFD1");
  w.u32(static_cast<std::uint32_t>(x.rows()));
  w.u32(static_cast<std::uint32_t>(x.cols()));
  w.f32s(x.storage());
  for (int l : y) w.u32(static_cast<std::uint32_t>(l));
  w.seal();
  return w.buffer();
}

inline void hfd_decode(std::span<const std::uint8_t> bytes, const std::string& path, Tensor<float>& x,
                       std::vector<int>& y) {
  const auto body = io::verify_crc(bytes, path);
  io::ByteReader r(body, path);
  if (r.str(4) != "HFD1") throw FormatError(path + ": bad magic");
  const std::size_t n = r.u32(), dim = r.u32();
  if (r.remaining() != n * dim * 4 + n * 4) throw FormatError(path + ": shape does not match payload");
  x = Tensor<float>({n, dim});
  r.f32s(x.storage());
  y.resize(n);
  for (auto& l : y) l = static_cast<int>(r.u32());
}

}  // namespace detail

/// Writes `path` (HFD: train rows then test rows) and `path`.json (sidecar).
inline void write_feature_dataset(const DatasetBundle& b, const std::string& path) {
  b.validate();
  Tensor<float> all({b.train_x.rows() + b.test_x.rows(), b.dim()});
  std::copy(b.train_x.storage().begin(), b.train_x.storage().end(), all.storage().begin());
  std::copy(b.test_x.storage().begin(), b.test_x.storage().end(),
            all.storage().begin() + static_cast<std::ptrdiff_t>(b.train_x.size()));
  std::vector<int> labels = b.train_y;
  labels.insert(labels.end(), b.test_y.begin(), b.test_y.end());
  io::write_file(path, detail::hfd_encode(all, labels));
  nlohmann::json side{{"name", b.name},
                      {"num_labels", b.num_labels},
                      {"test_count", b.test_y.size()},
                      {"label_names", b.label_names},
                      {"normalization", b.normalization.to_json()},
                      {"provenance", b.provenance}};
  side["groupings"] = nlohmann::json::object();
  for (const auto& [key, t] : b.groupings) side["groupings"][key] = t.grouping_json();
  const std::string text = side.dump(2);
  io::write_file(path + ".json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Reads an HFD file and its sidecar (`path`.json). The last `test_count`
/// rows form the test split.
inline DatasetBundle load_feature_dataset(const std::string& path) {
  Tensor<float> all;
  std::vector<int> labels;
  detail::hfd_decode(io::read_file(path), path, all, labels);
  nlohmann::json side;
  try {
    const auto raw = io::read_file(path + ".json");
    side = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ".json: " + e.what());
  }
  DatasetBundle b;
  b.name = side.value("name", std::string("features"));
  const std::size_t n = labels.size();
  const std::size_t n_test = side.value("test_count", n / 5);
  if (n_test >= n) throw FormatError(path + ".json: test_count leaves no training rows");
  std::size_t max_label = 0;
  for (int l : labels) max_label = std::max<std::size_t>(max_label, static_cast<std::size_t>(l));
  b.num_labels = side.value("num_labels", max_label + 1);
  b.label_names = side.value("label_names", std::vector<std::string>{});
  if (side.contains("normalization")) b.normalization = Normalization::from_json(side["normalization"]);
  b.provenance = side.value("provenance", "hfd:" + path);
  std::vector<std::size_t> tr(n - n_test), te(n_test);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), n - n_test);
  b.train_x = all.rows_slice(tr);
  b.test_x = all.rows_slice(te);
  b.train_y.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(tr.size()));
  b.test_y.assign(labels.begin() + static_cast<std::ptrdiff_t>(tr.size()), labels.end());
  b.train_ids = tr;
  b.test_ids = te;
  if (side.contains("groupings")) {
    for (const auto& [key, m] : side["groupings"].items()) {
      b.groupings[key] = TaskSpec::from_map(key, m, b.num_labels);
    }
  }
  b.validate();
  return b;
}

/// Where a dataset comes from; stored in run configs.
struct DatasetRef {
  std::string kind = "synthetic";  ///< "synthetic", "fashion_mnist" or "features"
  std::string path;
  HierarchySpec synthetic;
  std::uint64_t synthetic_seed = 7;
  std::size_t train_subset = 0;
  std::size_t test_subset = 0;

  std::string id() const {
    std::string base = kind == "synthetic" ? "synthetic-" + std::to_string(synthetic_seed)
                                           : kind + ":" + std::filesystem::path(path).filename().string();
    if (train_subset || test_subset) base += "-" + std::to_string(train_subset) + "x" + std::to_string(test_subset);
    return base;
  }
};

inline void to_json(nlohmann::json& j, const DatasetRef& r) {
  j = {{"kind", r.kind}, {"train_subset", r.train_subset}, {"test_subset", r.test_subset}};
  if (r.kind == "synthetic") {
    j["spec"] = r.synthetic;
    j["seed"] = r.synthetic_seed;
  } else {
    j["path"] = r.path;
  }
}
inline void from_json(const nlohmann::json& j, DatasetRef& r) {
  r.kind = j.value("kind", std::string("synthetic"));
  r.path = j.value("path", std::string());
  if (j.contains("spec")) r.synthetic = j["spec"].get<HierarchySpec>();
  r.synthetic_seed = j.value("seed", std::uint64_t{7});
  r.train_subset = j.value("train_subset", std::size_t{0});
  r.test_subset = j.value("test_subset", std::size_t{0});
  if (r.kind != "synthetic" && r.kind != "fashion_mnist" && r.kind != "features") {
    throw ConfigError("unknown dataset kind '" + r.kind + "'");
  }
}

inline DatasetBundle load_dataset(const DatasetRef& ref) {
  DatasetBundle b;
  if (ref.kind == "synthetic") {
    b = generate_synthetic(ref.synthetic, ref.synthetic_seed);
  } else if (ref.kind == "fashion_mnist") {
    b = load_fashion_mnist(ref.path);
  } else if (ref.kind == "features") {
    b = load_feature_dataset(ref.path);
  } else {
    throw ConfigError("unknown dataset kind '" + ref.kind + "'");
  }
  return b.subset(ref.train_subset, ref.test_subset);
}

}  // namespace hga
