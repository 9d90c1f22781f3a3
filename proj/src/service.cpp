#include "lasdiff/service.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "lasdiff/error.hpp"
#include "lasdiff/image.hpp"

namespace lasdiff {

std::string to_string(JobStatus s) {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
  }
  return "unknown";
}

std::vector<uint8_t> parse_region(const nlohmann::json& region, const PatchLayout& layout) {
  if (region.is_string()) return half_region(region.get<std::string>(), layout);
  const int side = layout.per_side();
  std::vector<uint8_t> out;
  auto cell = [&](const nlohmann::json& v) {
    if (v.is_boolean()) return static_cast<uint8_t>(v.get<bool>());
    if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return static_cast<uint8_t>(v.get<int>());
    throw Error("invalid-region", "mask entries must be 0/1 or booleans");
  };
  if (!region.is_array()) throw Error("invalid-region", "expected a half name or a mask");
  if (region.size() == static_cast<size_t>(side) && region.front().is_array()) {
    for (const auto& row : region) {
      if (!row.is_array() || row.size() != static_cast<size_t>(side))
        throw Error("invalid-region", "mask must be " + std::to_string(side) + "x" + std::to_string(side));
      for (const auto& v : row) out.push_back(cell(v));
    }
  } else if (region.size() == static_cast<size_t>(layout.count())) {
    for (const auto& v : region) out.push_back(cell(v));
  } else {
    throw Error("invalid-region", "mask must be " + std::to_string(side) + "x" + std::to_string(side));
  }
  return out;
}

namespace {

struct Job {
  std::string id;
  JobStatus status = JobStatus::queued;
  nlohmann::json request;
  Conditioning cond;
  SamplerConfig sampler;
  uint64_t seed = 0;
  int num_samples = 1;
  std::vector<JobResult> results;
  std::string error;
};

nlohmann::json error_body(const std::string& code, const std::string& detail) {
  return {{"error", code}, {"detail", detail}};
}

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

GrayImage decode_sketch(const nlohmann::json& body, const std::string& key) {
  if (!body.contains(key) || !body[key].is_string()) throw Error("invalid-image", "missing " + key);
  std::string text = body[key].get<std::string>();
  if (const auto comma = text.find(','); text.rfind("data:", 0) == 0 && comma != std::string::npos)
    text = text.substr(comma + 1);
  const auto bytes = base64_decode(text);
  auto image = decode_png(bytes);
  // other sizes are rescaled to the encoder input
  if (image.width != 224 || image.height != 224) image = resize(image, 224, 224);
  return image;
}

}  // namespace

struct GenerationService::Impl {
  ServiceOptions options;
  std::shared_ptr<Models> models;
  std::shared_ptr<const PatchEncoder> encoder;
  httplib::Server server;
  std::thread http_thread, worker;
  int bound_port = -1;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> queue;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  uint64_t next_id = 1;
  bool stopping = false;

  int view_or_throw(const nlohmann::json& body) const {
    const std::string v = body.value("view_id", "");
    const auto names = predefined_view_names();
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == v) return static_cast<int>(i);
    throw Error("invalid-view", v);
  }

  SamplerConfig sampler_of(const nlohmann::json& body) const {
    SamplerConfig s = options.sampler;
    s.steps = body.value("steps", s.steps);
    s.guidance = body.value("guidance", s.guidance);
    if (s.steps < 1 || s.steps > 1000) throw Error("invalid-request", "steps must be in [1, 1000]");
    return s;
  }

  void enqueue(const httplib::Request& req, httplib::Response& res,
               const std::function<Conditioning(const nlohmann::json&)>& make_cond) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return reply(res, 400, error_body("invalid-json", "request body is not JSON"));
    }
    if (!models) return reply(res, 503, error_body("model-not-loaded", "no checkpoints loaded"));
    auto job = std::make_shared<Job>();
    try {
      job->cond = make_cond(body);
      job->sampler = sampler_of(body);
      job->seed = body.value("seed", uint64_t{0});
      job->num_samples = body.value("num_samples", 1);
      if (job->num_samples < 1 || job->num_samples > 64) throw Error("invalid-request", "num_samples in [1, 64]");
    } catch (const Error& e) {
      nlohmann::json b = error_body(e.code(), e.what());
      if (e.code() == "invalid-view") b["valid_views"] = predefined_view_names();
      return reply(res, 400, b);
    } catch (const nlohmann::json::exception& e) {
      return reply(res, 400, error_body("invalid-request", e.what()));
    }
    // keep the request without the image payloads
    job->request = body;
    for (const char* k : {"sketch", "sketch_a", "sketch_b"})
      if (job->request.contains(k)) job->request[k] = "<png>";
    job->request["endpoint"] = req.path;
    {
      std::lock_guard lock(mu);
      if (queue.size() >= options.queue_depth) return reply(res, 429, error_body("queue-full", "try again later"));
      char buf[32];
      std::snprintf(buf, sizeof(buf), "job-%06llu", static_cast<unsigned long long>(next_id++));
      job->id = buf;
      jobs[job->id] = job;
      queue.push_back(job->id);
    }
    cv.notify_one();
    reply(res, 202, {{"job_id", job->id}, {"status", "queued"}});
  }

  Conditioning sketch_cond(const GrayImage& image, int view) const {
    if (models->config.occupancy_net.cond != CondKind::sketch)
      throw Error("unsupported-condition", "loaded model is not sketch-conditioned");
    return sketch_condition(encode_sketch(image, *encoder), view);
  }

  nlohmann::json job_json(const Job& j) const {
    nlohmann::json out = {{"job_id", j.id}, {"status", to_string(j.status)}, {"request", j.request}};
    if (!j.error.empty()) out["error"] = j.error;
    if (j.status == JobStatus::done) {
      auto results = nlohmann::json::array();
      for (size_t k = 0; k < j.results.size(); ++k) {
        const auto& r = j.results[k];
        nlohmann::json e = {{"seed", r.seed}, {"warnings", r.warnings}, {"seconds", r.seconds}};
        if (r.error.empty()) {
          e["mesh_url"] = "/jobs/" + j.id + "/mesh/" + std::to_string(k) + ".obj";
          e["occupancy_url"] = "/jobs/" + j.id + "/occupancy/" + std::to_string(k);
        } else {
          e["error"] = r.error;
        }
        results.push_back(e);
      }
      out["results"] = results;
    }
    return out;
  }

  std::shared_ptr<Job> find(const std::string& id) {
    std::lock_guard lock(mu);
    auto it = jobs.find(id);
    return it == jobs.end() ? nullptr : it->second;
  }

  void work() {
    torch::NoGradGuard no_grad;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        job = jobs[queue.front()];
        queue.pop_front();
        job->status = JobStatus::running;
      }
      std::vector<JobResult> results;
      for (int k = 0; k < job->num_samples; ++k) {
        JobResult r;
        r.seed = job->seed + k;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const auto g = generate(*models, job->cond, r.seed, job->sampler);
          r.obj = to_obj_string(g.mesh);
          r.resolution = g.occupancy.resolution();
          const int n = r.resolution;
          for (int i = 0; i < n; ++i)
            for (int jj = 0; jj < n; ++jj)
              for (int kk = 0; kk < n; ++kk)
                if (g.occupancy.at(i, jj, kk) > 0.5) r.occupied.push_back({i, jj, kk});
          r.warnings = g.warnings;
          if (!options.run_dir.empty()) {
            const auto dir = options.run_dir / "jobs" / job->id;
            std::filesystem::create_directories(dir);
            std::ofstream(dir / (std::to_string(k) + ".obj")) << r.obj;
          }
        } catch (const Error& e) {
          r.error = e.code();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back(std::move(r));
      }
      std::lock_guard lock(mu);
      const bool all_failed =
          std::all_of(results.begin(), results.end(), [](const JobResult& r) { return !r.error.empty(); });
      if (all_failed) {
        job->error = results.front().error;
        job->status = JobStatus::failed;
      } else {
        job->results = std::move(results);
        job->status = JobStatus::done;
      }
    }
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json b = {{"status", "ok"}, {"checkpoints", options.checkpoints}, {"model_loaded", models != nullptr}};
      if (models) b["condition"] = to_string(models->config.occupancy_net.cond);
      reply(res, 200, b);
    });

    server.Get("/views", [](const httplib::Request&, httplib::Response& res) {
      auto out = nlohmann::json::array();
      for (const auto& v : predefined_views())
        out.push_back({{"name", v.name},
                       {"azimuth", v.azimuth},
                       {"elevation", v.elevation},
                       {"distance", v.distance},
                       {"fov_y", v.fov_y},
                       {"image_size", v.image_size}});
      reply(res, 200, out);
    });

    server.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      enqueue(req, res, [this](const nlohmann::json& b) {
        const int view = view_or_throw(b);
        return sketch_cond(decode_sketch(b, "sketch"), view);
      });
    });

    server.Post("/stitch", [this](const httplib::Request& req, httplib::Response& res) {
      enqueue(req, res, [this](const nlohmann::json& b) {
        const int view = view_or_throw(b);
        if (!b.contains("region")) throw Error("invalid-region", "missing region");
        const auto region = parse_region(b["region"], encoder->layout());
        const auto a = encode_sketch(decode_sketch(b, "sketch_a"), *encoder);
        const auto s = encode_sketch(decode_sketch(b, "sketch_b"), *encoder);
        if (models->config.occupancy_net.cond != CondKind::sketch)
          throw Error("unsupported-condition", "loaded model is not sketch-conditioned");
        return sketch_condition(stitch_patch_features(a, s, region), view);
      });
    });

    server.Post("/generate_category", [this](const httplib::Request& req, httplib::Response& res) {
      enqueue(req, res, [this](const nlohmann::json& b) {
        if (!b.contains("category") || !b["category"].is_string() || b["category"].get<std::string>().empty())
          throw Error("invalid-request", "missing category");
        if (models->config.occupancy_net.cond != CondKind::category)
          throw Error("unsupported-condition", "loaded model is not category-conditioned");
        return category_condition(b["category"].get<std::string>(), models->config.occupancy_net.cond_dim);
      });
    });

    server.Get(R"(/jobs/([\w-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto job = find(req.matches[1]);
      if (!job) return reply(res, 404, error_body("unknown-job", req.matches[1]));
      std::lock_guard lock(mu);
      reply(res, 200, job_json(*job));
    });

    auto result_of = [this](const httplib::Request& req, httplib::Response& res) -> const JobResult* {
      auto job = find(req.matches[1]);
      if (!job) {
        reply(res, 404, error_body("unknown-job", req.matches[1]));
        return nullptr;
      }
      std::lock_guard lock(mu);
      const size_t k = std::stoul(req.matches[2]);
      if (job->status != JobStatus::done || k >= job->results.size() || !job->results[k].error.empty()) {
        reply(res, 404, error_body("no-result", "result not available"));
        return nullptr;
      }
      return &job->results[k];
    };

    server.Get(R"(/jobs/([\w-]+)/mesh/(\d+)\.obj)", [result_of](const httplib::Request& req, httplib::Response& res) {
      if (const auto* r = result_of(req, res)) res.set_content(r->obj, "text/plain");
    });

    server.Get(R"(/jobs/([\w-]+)/occupancy/(\d+))", [result_of](const httplib::Request& req, httplib::Response& res) {
      if (const auto* r = result_of(req, res)) reply(res, 200, {{"resolution", r->resolution}, {"coords", r->occupied}});
    });
  }
};

GenerationService::GenerationService(ServiceOptions options, std::shared_ptr<Models> models,
                                     std::shared_ptr<const PatchEncoder> encoder)
    : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  impl_->models = std::move(models);
  impl_->encoder = encoder ? std::move(encoder) : std::make_shared<RandomPatchEncoder>();
  impl_->routes();
}

GenerationService::~GenerationService() { stop(); }

int GenerationService::start() {
  auto& s = impl_->server;
  impl_->bound_port = impl_->options.port == 0 ? s.bind_to_any_port(impl_->options.host)
                                               : (s.bind_to_port(impl_->options.host, impl_->options.port)
                                                      ? impl_->options.port
                                                      : -1);
  if (impl_->bound_port < 0) throw Error("bind-failed", impl_->options.host + ":" + std::to_string(impl_->options.port));
  impl_->worker = std::thread([this] { impl_->work(); });
  impl_->http_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  s.wait_until_ready();
  return impl_->bound_port;
}

void GenerationService::wait(const std::atomic<bool>* interrupt) {
  while (impl_->server.is_running()) {
    if (interrupt && interrupt->load()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  stop();
}

void GenerationService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->http_thread.joinable()) impl_->http_thread.join();
  if (impl_->worker.joinable()) impl_->worker.join();
}

int GenerationService::port() const { return impl_->bound_port; }

}  // namespace lasdiff
