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

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "hga/data.hpp"
#include "hga/error.hpp"
#include "hga/evaluation.hpp"
#include "hga/finetune.hpp"
#include "hga/pretrain.hpp"
#include "hga/viz.hpp"

namespace hga::service {

struct NotFound : Error {
  using Error::Error;
};
struct Conflict : Error {
  using Error::Error;
};

/// Artifact store rooted at a directory:
///   spectra/{spectrum_id}/spectrum.json, ckpt_NN.hgac, epochs.csv
///   tasks/{name}.json
///   jobs/{job_id}.json
class Store {
 public:
  explicit Store(std::string root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "spectra");
    std::filesystem::create_directories(root_ / "tasks");
    std::filesystem::create_directories(root_ / "jobs");
  }

  const std::filesystem::path& root() const { return root_; }

  /// Manifests of every stored spectrum, ordered by id.
  std::vector<nlohmann::json> manifests() const {
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root_ / "spectra")) {
      if (e.is_directory() && std::filesystem::exists(e.path() / "spectrum.json")) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<nlohmann::json> out;
    for (const auto& d : dirs) out.push_back(detail::read_json(d / "spectrum.json"));
    return out;
  }

  nlohmann::json manifest(const std::string& spectrum_id) const {
    const auto p = root_ / "spectra" / spectrum_id / "spectrum.json";
    if (!safe_name(spectrum_id) || !std::filesystem::exists(p)) {
      throw NotFound("unknown spectrum '" + spectrum_id + "'");
    }
    return detail::read_json(p);
  }

  std::shared_ptr<const Spectrum> spectrum(const std::string& spectrum_id) {
    std::lock_guard lock(mu_);
    auto it = spectra_.find(spectrum_id);
    if (it != spectra_.end()) return it->second;
    manifest(spectrum_id);
    auto sp = std::make_shared<const Spectrum>(load_spectrum((root_ / "spectra" / spectrum_id).string()));
    spectra_[spectrum_id] = sp;
    return sp;
  }

  /// Spectrum owning a checkpoint id ("{spectrum_id}-cNN").
  std::pair<std::shared_ptr<const Spectrum>, const Checkpoint*> checkpoint(const std::string& cid) {
    const auto pos = cid.rfind("-c");
    if (pos == std::string::npos) throw NotFound("unknown checkpoint '" + cid + "'");
    const auto sp = spectrum(cid.substr(0, pos));
    for (const auto& c : sp->checkpoints) {
      if (c.id() == cid) return {sp, &c};
    }
    throw NotFound("unknown checkpoint '" + cid + "'");
  }

  std::shared_ptr<const DatasetBundle> dataset(const DatasetRef& ref) {
    std::lock_guard lock(mu_);
    const auto key = nlohmann::json(ref).dump();
    auto it = datasets_.find(key);
    if (it != datasets_.end()) return it->second;
    auto b = std::make_shared<const DatasetBundle>(load_dataset(ref));
    datasets_[key] = b;
    return b;
  }

  void put_task(const TaskSpec& t) {
    std::lock_guard lock(mu_);
    const auto p = root_ / "tasks" / (t.name + ".json");
    if (std::filesystem::exists(p)) throw Conflict("task '" + t.name + "' already exists");
    nlohmann::json j{{"name", t.name}, {"grouping", t.grouping_json()}, {"num_classes", t.num_classes},
                     {"num_labels", t.grouping.size()}};
    detail::write_text(p, j.dump(2) + "\n");
  }

  std::optional<TaskSpec> user_task(const std::string& name) const {
    const auto p = root_ / "tasks" / (name + ".json");
    if (!safe_name(name) || !std::filesystem::exists(p)) return std::nullopt;
    const auto j = detail::read_json(p);
    return TaskSpec::from_map(name, j.at("grouping"), j.at("num_labels").get<std::size_t>());
  }

  std::vector<nlohmann::json> user_tasks() const {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(root_ / "tasks")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<nlohmann::json> out;
    for (const auto& f : files) out.push_back(detail::read_json(f));
    return out;
  }

  /// User task by name, else a grouping built into the dataset.
  TaskSpec resolve_task(const std::string& name, const DatasetBundle& data) const {
    if (auto t = user_task(name)) {
      t->validate(data.num_labels);
      return *t;
    }
    auto it = data.groupings.find(name);
    if (it == data.groupings.end()) throw NotFound("unknown task '" + name + "'");
    return it->second;
  }

  static bool safe_name(const std::string& s) {
    if (s.empty() || s.size() > 128) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    }) && s.find("..") == std::string::npos;
  }

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Spectrum>> spectra_;
  std::map<std::string, std::shared_ptr<const DatasetBundle>> datasets_;
};

struct JobRecord {
  std::string id;
  std::string kind;  ///< "pretrain", "finetune" or "sweep"
  std::string status = "queued";
  double progress = 0;
  nlohmann::json request;
  nlohmann::json result;
  std::string error;

  nlohmann::json to_json() const {
    nlohmann::json j{{"id", id}, {"kind", kind}, {"status", status}, {"progress", progress}, {"request", request}};
    j["result"] = result;
    j["error"] = error.empty() ? nlohmann::json() : nlohmann::json(error);
    return j;
  }
};

/// Job records plus a bounded pool of worker threads.
class JobQueue {
 public:
  using Work = std::function<nlohmann::json(const std::function<void(double)>&)>;

  explicit JobQueue(std::size_t workers, std::filesystem::path persist_dir)
      : persist_dir_(std::move(persist_dir)) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, workers); ++i) threads_.emplace_back([this] { loop(); });
  }

  ~JobQueue() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::string submit(std::string kind, nlohmann::json request, Work work) {
    std::lock_guard lock(mu_);
    JobRecord r;
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06zu", ++counter_);
    r.id = buf;
    r.kind = std::move(kind);
    r.request = std::move(request);
    records_[r.id] = r;
    pending_.push_back({r.id, std::move(work)});
    cv_.notify_one();
    return r.id;
  }

  JobRecord get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(id);
    if (it == records_.end()) throw NotFound("unknown job '" + id + "'");
    return it->second;
  }

  /// Blocks until the job leaves queued/running.
  JobRecord wait(const std::string& id) {
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [&] {
      auto it = records_.find(id);
      return it == records_.end() || it->second.status == "done" || it->second.status == "failed";
    });
    return records_.at(id);
  }

 private:
  void loop() {
    for (;;) {
      std::pair<std::string, Work> item;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
        if (pending_.empty()) return;
        item = std::move(pending_.front());
        pending_.pop_front();
        records_[item.first].status = "running";
      }
      const std::string& id = item.first;
      auto progress = [&](double f) {
        std::lock_guard lock(mu_);
        records_[id].progress = f;
      };
      nlohmann::json result;
      std::string error;
      try {
        result = item.second(progress);
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard lock(mu_);
      auto& rec = records_[id];
      if (error.empty()) {
        rec.status = "done";
        rec.progress = 1;
        rec.result = std::move(result);
      } else {
        rec.status = "failed";
        rec.error = std::move(error);
      }
      try {
        detail::write_text(persist_dir_ / (id + ".json"), rec.to_json().dump(2) + "\n");
      } catch (const std::exception&) {
      }
      done_cv_.notify_all();
    }
  }

  std::filesystem::path persist_dir_;
  mutable std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  std::map<std::string, JobRecord> records_;
  std::deque<std::pair<std::string, Work>> pending_;
  std::vector<std::thread> threads_;
  std::size_t counter_ = 0;
  bool stopping_ = false;
};

struct ServiceOptions {
  std::size_t workers = 2;
  std::size_t pca_samples = 1000;
  std::string static_dir;  ///< UI bundle, mounted at / when set
};

/// HTTP front end over a Store.
class Service {
 public:
  Service(const std::string& store_root, ServiceOptions opts = {})
      : store_(store_root), opts_(std::move(opts)), jobs_(opts_.workers, store_.root() / "jobs") {
    routes();
  }

  httplib::Server& http() { return server_; }
  Store& store() { return store_; }
  JobQueue& jobs() { return jobs_; }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }

  /// Finetune job body shared by the HTTP route and direct callers.
  nlohmann::json finetune(const std::string& checkpoint_id, const std::string& task_id, std::size_t k,
                          std::size_t trials, std::uint64_t seed) {
    auto [sp, ckpt] = store_.checkpoint(checkpoint_id);
    const auto data = store_.dataset(sp->config.dataset);
    FewShotJob job;
    job.task = store_.resolve_task(task_id, *data);
    job.k = k;
    job.trials = trials;
    job.seed = seed;
    return run_job(std::move(job), *ckpt, *data).to_json();
  }

 private:
  static void send(httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const NotFound& e) {
        send(res, {{"error", e.what()}}, 404);
      } catch (const IndexError& e) {
        send(res, {{"error", e.what()}}, 404);
      } catch (const Conflict& e) {
        send(res, {{"error", e.what()}}, 409);
      } catch (const ValidationError& e) {
        send(res, {{"error", e.what()}}, 422);
      } catch (const ParameterError& e) {
        send(res, {{"error", e.what()}}, 422);
      } catch (const UnsupportedHeadError& e) {
        send(res, {{"error", e.what()}}, 422);
      } catch (const nlohmann::json::exception& e) {
        send(res, {{"error", std::string("bad request body: ") + e.what()}}, 400);
      } catch (const std::exception& e) {
        send(res, {{"error", e.what()}}, 500);
      }
    };
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    return nlohmann::json::parse(req.body);
  }

  static std::size_t param_size(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string v = req.get_param_value(key);
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != v.size() || x < 0) throw std::invalid_argument("negative");
      return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
      throw ParameterError(std::string("query parameter '") + key + "' must be a non-negative integer");
    }
  }

  void routes() {
    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      send(res, {{"error", "no route for " + req.method + " " + req.path}}, res.status);
      return httplib::Server::HandlerResponse::Handled;
    });
    server_.Get("/api/spectra", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& m : store_.manifests()) {
        out.push_back({{"id", m.at("id")}, {"head", m.at("head")}, {"n", m.at("n")}, {"dataset", m.at("dataset")},
                       {"checkpoint_count", m.at("checkpoints").size()}});
      }
      send(res, out);
    }));

    server_.Get(R"(/api/spectra/([^/]+)/checkpoints)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto m = store_.manifest(req.matches[1]);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& c : m.at("checkpoints")) {
        const auto& t = c.at("test");
        out.push_back({{"id", c.at("id")}, {"index", c.at("index")}, {"epoch", c.at("epoch")},
                       {"mse", t.at("mse")}, {"accuracy", t.at("accuracy")},
                       {"entropy", t.at("assignment_entropy")}, {"effective_count", t.at("effective_count")},
                       {"knob", c.at("knob")}, {"train_mse", c.at("train_mse")}});
      }
      send(res, out);
    }));

    server_.Get(R"(/api/checkpoints/([^/]+)/prototypes)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string cid = req.matches[1];
      auto [sp, ckpt] = store_.checkpoint(cid);
      const auto data = store_.dataset(sp->config.dataset);
      const auto set = decode_prototypes(ckpt->model, *data);
      nlohmann::json out{{"checkpoint_id", cid}, {"pathway", set.pathway}, {"tail_frequency", set.tail_frequency},
                         {"height", set.height}, {"width", set.width}, {"modal_fill", set.modal_fill}};
      out["prototypes"] = nlohmann::json::array();
      for (const auto& p : set.prototypes) {
        nlohmann::json jp{{"rank", p.rank}, {"index", p.index}, {"frequency", p.frequency}, {"slot", p.slot}};
        jp["image_url"] = set.height ? nlohmann::json("/api/checkpoints/" + cid + "/prototypes/" +
                                                      std::to_string(p.rank) + ".pgm")
                                     : nlohmann::json();
        jp["nearest_train_row"] = p.nearest_train_row ? nlohmann::json(*p.nearest_train_row) : nlohmann::json();
        out["prototypes"].push_back(jp);
      }
      send(res, out);
    }));

    server_.Get(R"(/api/checkpoints/([^/]+)/prototypes/(\d+)\.pgm)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [sp, ckpt] = store_.checkpoint(req.matches[1]);
      const auto data = store_.dataset(sp->config.dataset);
      const auto set = decode_prototypes(ckpt->model, *data);
      const std::size_t rank = std::stoul(req.matches[2]);
      if (rank >= set.prototypes.size() || !set.height) throw NotFound("no image for prototype rank");
      res.set_content(to_pgm(set.prototypes[rank].decoded, set.height, set.width), "image/x-portable-graymap");
    }));

    server_.Get(R"(/api/checkpoints/([^/]+)/pca)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [sp, ckpt] = store_.checkpoint(req.matches[1]);
      const auto data = store_.dataset(sp->config.dataset);
      const std::size_t n = param_size(req, "sample_n", std::min(opts_.pca_samples, data->train_x.rows()));
      const auto pca = pca_project(ckpt->model, *data, n, param_size(req, "seed", 0));
      auto out = pca.to_json();
      out["checkpoint_id"] = req.matches[1];
      send(res, out);
    }));

    server_.Get("/api/tasks", guarded([this](const httplib::Request&, httplib::Response& res) {
      send(res, store_.user_tasks());
    }));

    server_.Post("/api/tasks", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      const std::string name = body.at("name").get<std::string>();
      if (!Store::safe_name(name)) throw ValidationError("task name must be [A-Za-z0-9_.-]+");
      const auto& grouping = body.at("grouping");
      if (!grouping.is_object()) throw ValidationError("grouping must be an object {label: class}");
      const std::size_t labels = body.value("num_labels", grouping.size());
      const auto task = TaskSpec::from_map(name, grouping, labels);
      store_.put_task(task);
      send(res, {{"id", name}, {"name", name}, {"num_classes", task.num_classes}, {"num_labels", labels}}, 201);
    }));

    server_.Post("/api/finetune", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      const std::string cid = body.at("checkpoint_id").get<std::string>();
      const std::string task_id = body.at("task_id").get<std::string>();
      const auto k = body.at("k").get<long long>();
      const auto trials = body.value("trials", 10LL);
      const auto seed = body.value("seed", std::uint64_t{0});
      if (k < 1) throw ParameterError("k must be >= 1");
      if (trials < 1) throw ParameterError("trials must be >= 1");
      auto [sp, ckpt] = store_.checkpoint(cid);
      store_.resolve_task(task_id, *store_.dataset(sp->config.dataset));
      nlohmann::json request{{"checkpoint_id", cid}, {"task_id", task_id}, {"k", k}, {"trials", trials}, {"seed", seed}};
      const auto id = jobs_.submit("finetune", request, [this, cid, task_id, k, trials, seed](const auto&) {
        return finetune(cid, task_id, static_cast<std::size_t>(k), static_cast<std::size_t>(trials), seed);
      });
      send(res, {{"job_id", id}, {"status", "queued"}}, 202);
    }));

    server_.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send(res, jobs_.get(req.matches[1]).to_json());
    }));

    server_.Get(R"(/api/selection/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto sp = store_.spectrum(req.matches[1]);
      const auto data = store_.dataset(sp->config.dataset);
      const std::string strategy = req.has_param("strategy") ? req.get_param_value("strategy") : "most_complex";
      SelectionResult r;
      if (strategy == "most_complex") {
        r = select_most_complex(*sp);
        r.test_accuracy = std::numeric_limits<double>::quiet_NaN();
        if (req.has_param("task")) {
          FewShotJob job;
          job.task = store_.resolve_task(req.get_param_value("task"), *data);
          job.k = param_size(req, "k", 1);
          job.trials = param_size(req, "trials", 10);
          job.seed = param_size(req, "seed", 0);
          if (job.k < 1) throw ParameterError("k must be >= 1");
          r.test_accuracy = run_job(job, sp->checkpoints[r.index], *data).mean;
        }
      } else {
        const std::string task_name = req.has_param("task") ? req.get_param_value("task") : "";
        if (task_name.empty()) throw ParameterError("query parameter 'task' is required");
        const auto task = store_.resolve_task(task_name, *data);
        const std::size_t k = param_size(req, "k", 1), trials = param_size(req, "trials", 10);
        const std::uint64_t seed = param_size(req, "seed", 0);
        if (strategy == "validation") {
          r = select_by_validation(*sp, *data, task, k, param_size(req, "v", 1), seed, trials);
        } else if (strategy == "oracle") {
          if (k < 1) throw ParameterError("k must be >= 1");
          r = select_oracle(sweep(*sp, *data, task, {k}, trials, seed), k);
        } else {
          throw ParameterError("unknown strategy '" + strategy + "'");
        }
      }
      auto out = r.to_json();
      out["spectrum_id"] = sp->id;
      if (std::isnan(r.test_accuracy)) out["test_accuracy"] = nullptr;
      send(res, out);
    }));

    if (!opts_.static_dir.empty()) server_.set_mount_point("/", opts_.static_dir);
  }

  Store store_;
  ServiceOptions opts_;
  JobQueue jobs_;
  httplib::Server server_;
};

}  // namespace hga::service
