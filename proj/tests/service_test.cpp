#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "lasdiff/image.hpp"
#include "lasdiff/service.hpp"

using namespace lasdiff;
using nlohmann::json;

namespace {

std::shared_ptr<Models> tiny_models(CondKind cond) {
  auto cfg = default_config(8);
  cfg.occupancy_net.levels = {{8, 8}, {4, 16}};
  cfg.occupancy_net.attention_levels = {4};
  cfg.occupancy_net.bottleneck_blocks = 1;
  cfg.occupancy_net.time_dim = 16;
  cfg.occupancy_net.cond = cond;
  cfg.sdf_net.levels = {{16, 8}, {8, 16}};
  cfg.sdf_net.bottleneck_blocks = 1;
  cfg.sdf_net.time_dim = 16;
  cfg.sampler.steps = 3;
  cfg.validate();
  auto m = std::make_shared<Models>();
  m->config = cfg;
  m->occupancy = std::make_shared<DenseUNet>(cfg.occupancy_net);
  m->sdf = std::make_shared<SparseUNet>(cfg.sdf_net);
  m->occupancy->eval();
  m->sdf->eval();
  return m;
}

std::string sketch_png(int size = 224, int offset = 0) {
  GrayImage img(size, size);
  for (int i = size / 4; i < 3 * size / 4; ++i) {
    img.at(i, size / 4 + offset) = 0;
    img.at(size / 4, i) = 0;
    img.at(3 * size / 4, i) = 0;
  }
  const auto bytes = encode_png(img);
  return base64_encode(bytes);
}

struct Fixture {
  explicit Fixture(std::shared_ptr<Models> models, size_t depth = 16) {
    ServiceOptions o;
    o.queue_depth = depth;
    o.sampler.steps = 3;
    service = std::make_unique<GenerationService>(o, std::move(models));
    port = service->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(60, 0);
  }
  ~Fixture() { service->stop(); }

  httplib::Result post(const std::string& path, const json& body) {
    return client->Post(path, body.dump(), "application/json");
  }

  json wait_job(const std::string& id) {
    for (int i = 0; i < 600; ++i) {
      auto r = client->Get("/jobs/" + id);
      auto j = json::parse(r->body);
      if (j["status"] == "done" || j["status"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return {};
  }

  std::unique_ptr<GenerationService> service;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

// the request echo and timings differ between otherwise identical jobs
json outcome(json job) {
  job.erase("request");
  job.erase("job_id");
  if (job.contains("results"))
    for (auto& r : job["results"]) {
      r.erase("seconds");
      r.erase("mesh_url");
      r.erase("occupancy_url");
    }
  return job;
}

}  // namespace

TEST(Service, HealthAndViews) {
  Fixture f(nullptr);
  auto h = f.client->Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  EXPECT_EQ(json::parse(h->body)["model_loaded"], false);
  EXPECT_EQ(h->get_header_value("Access-Control-Allow-Origin"), "*");

  auto v = f.client->Get("/views");
  ASSERT_EQ(v->status, 200);
  auto views = json::parse(v->body);
  ASSERT_EQ(views.size(), 5u);
  const auto names = predefined_view_names();
  const auto defs = predefined_views();
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(views[i]["name"], names[i]);
    EXPECT_DOUBLE_EQ(views[i]["azimuth"].get<double>(), defs[i].azimuth);
    EXPECT_DOUBLE_EQ(views[i]["elevation"].get<double>(), defs[i].elevation);
  }
  auto o = f.client->Options("/generate");
  EXPECT_EQ(o->status, 204);
}

TEST(Service, NoModelAnswers503) {
  Fixture f(nullptr);
  auto r = f.post("/generate", {{"sketch", sketch_png()}, {"view_id", "front"}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
  EXPECT_EQ(json::parse(r->body)["error"], "model-not-loaded");
}

TEST(Service, InvalidRequests) {
  Fixture f(tiny_models(CondKind::sketch));
  auto r = f.post("/generate", {{"sketch", sketch_png()}, {"view_id", "back"}});
  ASSERT_EQ(r->status, 400);
  auto b = json::parse(r->body);
  EXPECT_EQ(b["error"], "invalid-view");
  EXPECT_EQ(b["valid_views"], json(predefined_view_names()));

  r = f.post("/generate", {{"sketch", "bm90IGEgcG5n"}, {"view_id", "front"}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["error"], "invalid-image");

  r = f.client->Post("/generate", "{", "application/json");
  EXPECT_EQ(r->status, 400);

  r = f.post("/stitch", {{"sketch_a", sketch_png()}, {"sketch_b", sketch_png()}, {"view_id", "front"},
                         {"region", json::array({1, 0})}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["error"], "invalid-region");

  r = f.post("/generate_category", {{"category", "chair"}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["error"], "unsupported-condition");

  EXPECT_EQ(f.client->Get("/jobs/job-999999")->status, 404);
  EXPECT_EQ(f.client->Get("/jobs/job-999999/mesh/0.obj")->status, 404);
}

TEST(Service, GenerateJobLifecycle) {
  Fixture f(tiny_models(CondKind::sketch));
  // non-224 images are rescaled
  auto r = f.post("/generate", {{"sketch", sketch_png(100)}, {"view_id", "side-right"}, {"seed", 7}, {"num_samples", 2}});
  ASSERT_EQ(r->status, 202);
  const std::string id = json::parse(r->body)["job_id"];
  const auto job = f.wait_job(id);
  ASSERT_FALSE(job.is_null());
  EXPECT_EQ(job["request"]["view_id"], "side-right");
  if (job["status"] == "done") {
    ASSERT_EQ(job["results"].size(), 2u);
    EXPECT_EQ(job["results"][0]["seed"], 7);
    EXPECT_EQ(job["results"][1]["seed"], 8);
    for (const auto& res : job["results"])
      if (res.contains("mesh_url")) {
        auto m = f.client->Get(res["mesh_url"].get<std::string>());
        EXPECT_EQ(m->status, 200);
        auto occ = json::parse(f.client->Get(res["occupancy_url"].get<std::string>())->body);
        EXPECT_EQ(occ["resolution"], 8);
        EXPECT_FALSE(occ["coords"].empty());
      }
  } else {
    EXPECT_EQ(job["status"], "failed");
    EXPECT_FALSE(job["error"].get<std::string>().empty());
  }
}

TEST(Service, StitchWithEmptyRegionMatchesPlainGeneration) {
  Fixture f(tiny_models(CondKind::sketch));
  const auto a = sketch_png(224, 0), b = sketch_png(224, 60);
  auto r1 = f.post("/generate", {{"sketch", a}, {"view_id", "front"}, {"seed", 3}});
  auto r2 = f.post("/stitch", {{"sketch_a", a}, {"sketch_b", b}, {"view_id", "front"}, {"seed", 3},
                               {"region", json(std::vector<std::vector<int>>(16, std::vector<int>(16, 0)))}});
  ASSERT_EQ(r1->status, 202);
  ASSERT_EQ(r2->status, 202);
  const auto j1 = f.wait_job(json::parse(r1->body)["job_id"]);
  const auto j2 = f.wait_job(json::parse(r2->body)["job_id"]);
  EXPECT_EQ(outcome(j1), outcome(j2));
  if (j1["status"] == "done" && j1["results"][0].contains("mesh_url")) {
    EXPECT_EQ(f.client->Get(j1["results"][0]["mesh_url"].get<std::string>())->body,
              f.client->Get(j2["results"][0]["mesh_url"].get<std::string>())->body);
  }
}

TEST(Service, CategoryEndpoint) {
  Fixture f(tiny_models(CondKind::category));
  auto r = f.post("/generate_category", {{"category", "chair"}, {"seed", 1}});
  ASSERT_EQ(r->status, 202);
  const auto job = f.wait_job(json::parse(r->body)["job_id"]);
  EXPECT_TRUE(job["status"] == "done" || job["status"] == "failed");
  EXPECT_EQ(f.post("/generate_category", json::object())->status, 400);
}

TEST(Service, FullQueueAnswers429) {
  Fixture f(tiny_models(CondKind::sketch), 1);
  const json body = {{"sketch", sketch_png()}, {"view_id", "front"}, {"steps", 100}, {"num_samples", 2}};
  int accepted = 0, rejected = 0;
  for (int i = 0; i < 4; ++i) {
    auto r = f.post("/generate", body);
    accepted += r->status == 202;
    rejected += r->status == 429;
  }
  EXPECT_GE(accepted, 1);
  EXPECT_LE(accepted, 2);
  EXPECT_GE(rejected, 2);
}

TEST(ParseRegion, Forms) {
  const auto top = parse_region("top");
  EXPECT_EQ(top, half_region("top"));
  std::vector<int> flat(256, 0);
  flat[5] = 1;
  EXPECT_EQ(parse_region(json(flat))[5], 1);
  std::vector<std::vector<bool>> nested(16, std::vector<bool>(16, false));
  nested[1][2] = true;
  const auto n = parse_region(json(nested));
  EXPECT_EQ(n[18], 1);
  EXPECT_EQ(std::count(n.begin(), n.end(), 1), 1);
  EXPECT_THROW(parse_region(json(std::vector<int>(255, 0))), Error);
  EXPECT_THROW(parse_region(json("diagonal")), Error);
  EXPECT_THROW(parse_region(json(std::vector<int>(256, 2))), Error);
}
