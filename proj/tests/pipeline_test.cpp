#include <gtest/gtest.h>

#include <filesystem>

#include "lasdiff/evaluate.hpp"
#include "lasdiff/mesh.hpp"
#include "lasdiff/pipeline.hpp"
#include "lasdiff/toy_shapes.hpp"
#include "test_util.hpp"

using namespace lasdiff;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(CondKind cond) {
  auto cfg = default_config(8);
  cfg.occupancy_net.levels = {{8, 8}, {4, 16}};
  cfg.occupancy_net.attention_levels = {4};
  cfg.occupancy_net.bottleneck_blocks = 1;
  cfg.occupancy_net.time_dim = 16;
  cfg.occupancy_net.cond = cond;
  cfg.sdf_net.levels = {{16, 8}, {8, 16}};
  cfg.sdf_net.bottleneck_blocks = 1;
  cfg.sdf_net.time_dim = 16;
  cfg.occupancy_opt.batch = 4;
  cfg.sdf_opt.batch = 4;
  cfg.sampler.steps = 4;
  cfg.seed = 3;
  return cfg;
}

const Dataset& toy_data() {
  static const Dataset data = [] {
    RandomPatchEncoder enc;
    DatasetOptions o;
    o.perturbations = 1;
    return build_dataset(make_toy_shapes(6, 1), tiny_config(CondKind::sketch), &enc, o);
  }();
  return data;
}

fs::path fresh(const std::string& name) {
  auto d = fs::temp_directory_path() / ("lasdiff_pipe_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Dataset, BuildShapesAndBaselines) {
  const auto& d = toy_data();
  ASSERT_EQ(d.shapes.size(), 6u);
  EXPECT_EQ(d.coarse, 8);
  EXPECT_EQ(d.fine, 16);
  for (const auto& s : d.shapes) {
    EXPECT_EQ(s.occupancy.resolution(), 8);
    EXPECT_EQ(s.shell.resolution, 16);
    EXPECT_NO_THROW(s.shell.validate());
    EXPECT_EQ(s.shell.size(), 8 * static_cast<size_t>(std::count(s.occupancy.values().begin(),
                                                                  s.occupancy.values().end(), 1.0)));
    for (double v : s.shell.values) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(s.sketches.size(), 5u);
  }
  // the occupancy baseline is the mean occupied fraction
  double occ = 0, n = 0;
  for (const auto& s : d.shapes)
    for (double v : s.occupancy.values()) occ += v * v, ++n;
  EXPECT_NEAR(zero_predictor_loss_occupancy(d), occ / n, 1e-9);
  EXPECT_GT(zero_predictor_loss_sdf(d), 0);
}

TEST(Training, ResumeContinuesExactly) {
  const auto cfg = tiny_config(CondKind::sketch);
  const auto& data = toy_data();
  const auto a = fresh("a"), b = fresh("b");
  TrainOptions o;
  o.run_dir = a;
  o.epochs = 3;
  const auto full = train_occupancy(cfg, data, o);
  ASSERT_EQ(full.epoch_loss.size(), 3u);
  EXPECT_EQ(full.steps, 3 * 2);

  o.run_dir = b;
  o.epochs = 2;
  train_occupancy(cfg, data, o);
  o.resume = true;
  o.epochs = 3;
  const auto resumed = train_occupancy(cfg, data, o);
  ASSERT_EQ(resumed.epoch_loss.size(), 3u);
  ASSERT_EQ(resumed.step_loss.size(), 2u);
  EXPECT_NEAR(resumed.step_loss[0], full.step_loss[4], 1e-6);
  EXPECT_NEAR(resumed.epoch_loss[2], full.epoch_loss[2], 1e-6);

  const auto ca = load_checkpoint(a / "checkpoints" / "occupancy.lasc");
  const auto cb = load_checkpoint(b / "checkpoints" / "occupancy.lasc");
  ASSERT_EQ(ca.params.size(), cb.params.size());
  for (size_t i = 0; i < ca.params.size(); ++i)
    EXPECT_TRUE(torch::allclose(ca.params[i].second, cb.params[i].second, 0, 1e-6)) << ca.params[i].first;

  auto other = cfg;
  other.cond_dropout = 0.2;
  EXPECT_THROW(train_occupancy(other, data, o), Error);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Training, SameSeedSameLosses) {
  const auto cfg = tiny_config(CondKind::none);
  TrainOptions o;
  o.epochs = 1;
  const auto x = train_sdf(cfg, toy_data(), o), y = train_sdf(cfg, toy_data(), o);
  EXPECT_EQ(x.step_loss, y.step_loss);
  EXPECT_TRUE(x.checkpoint.empty());
}

TEST(Generation, LoadsModelsAndGenerates) {
  const auto cfg = tiny_config(CondKind::sketch);
  const auto dir = fresh("gen");
  TrainOptions o;
  o.run_dir = dir;
  o.epochs = 1;
  train_occupancy(cfg, toy_data(), o);
  train_sdf(cfg, toy_data(), o);
  const RunLayout run{dir};
  auto models = load_models(run.occupancy_checkpoint(), run.sdf_checkpoint());
  EXPECT_EQ(nlohmann::json(models.config), nlohmann::json(cfg));
  const auto& s = toy_data().shapes[0].sketches[0];
  PatchGrid grid;
  grid.features = s.patches;
  grid.global = s.global;
  const auto cond = sketch_condition(grid, s.view);
  DenseField3D raw1, raw2;
  {
    torch::NoGradGuard ng;
    raw1 = sample_occupancy(*models.occupancy, cond, 11, cfg.sampler);
    raw2 = sample_occupancy(*models.occupancy, cond, 11, cfg.sampler);
  }
  EXPECT_EQ(raw1, raw2);
  for (double v : raw1.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  // stage two on a known shell is deterministic and extracts a mesh
  auto shell = toy_data().shapes[0].occupancy;
  const auto g1 = complete_generation(*models.sdf, shell, 5, cfg.sampler);
  const auto g2 = complete_generation(*models.sdf, shell, 5, cfg.sampler);
  EXPECT_EQ(g1.sparse_sdf.values, g2.sparse_sdf.values);
  EXPECT_EQ(g1.sparse_sdf.coords, subdivide_occupied(shell).coords);
  EXPECT_THROW(complete_generation(*models.sdf, DenseField3D(8, 0.0, FieldKind::occupancy), 5, cfg.sampler),
               EmptyGenerationError);
  fs::remove_all(dir);
}

TEST(Evaluate, SketchAndCategoryReports) {
  const auto dir = fresh("eval");
  const RunLayout run{dir};
  run.create();
  using lasdiff::testing::analytic_field;
  using lasdiff::testing::sphere_sdf;
  auto field = [&](double r) {
    return analytic_field(32, [&](const Vec3& p) { return sphere_sdf(p, r); });
  };
  fs::create_directories(dir / "reference");
  export_obj(marching_cubes_dual(field(0.5)), dir / "reference" / "ref0.obj");
  export_obj(marching_cubes_dual(field(0.4)), dir / "reference" / "ref1.obj");
  write_field(dir / "reference" / "ref0.occ.lasf", derive_occupancy(field(0.5), 16, 4.0 / 32));
  for (int k = 0; k < 3; ++k) {
    Generation g;
    g.mesh = marching_cubes_dual(field(0.45 + 0.02 * k));
    g.occupancy = derive_occupancy(field(0.45 + 0.02 * k), 16, 4.0 / 32);
    SampleRecord r;
    r.name = "s" + std::to_string(k);
    r.seed = k;
    r.view = "front";
    r.true_view = predefined_view("front");
    r.sketch = "reference/sketch.png";
    r.reference_mesh = "reference/ref0.obj";
    r.reference_occupancy = "reference/ref0.occ.lasf";
    write_png(dir / r.sketch, sketch_of(std::vector<TriangleMesh>{marching_cubes_dual(field(0.5))}, r.true_view));
    write_sample(run, r, g);
  }
  ASSERT_EQ(read_samples(run).size(), 3u);
  EvaluationOptions eo;
  eo.points = 256;
  eo.emd_points = 64;
  const auto sk = evaluate_run(dir, Protocol::sketch, eo);
  EXPECT_EQ(sk["protocol"], "sketch");
  EXPECT_EQ(sk["sample_count"], 3);
  std::set<std::string> names;
  for (const auto& m : sk["metrics"]) {
    names.insert(m["metric"]);
    EXPECT_TRUE(m["value"].is_number());
  }
  EXPECT_EQ(names, (std::set<std::string>{"clip_score", "sketch_cd", "chamfer", "emd", "voxel_iou"}));
  EXPECT_TRUE(fs::exists(run.reports() / "sketch.json"));
  EXPECT_TRUE(fs::exists(run.reports() / "sketch.csv"));
  EXPECT_EQ(sk["per_sample"].size(), 3u);

  const auto cat = evaluate_run(dir, Protocol::category, eo);
  names.clear();
  for (const auto& m : cat["metrics"]) names.insert(m["metric"]);
  EXPECT_EQ(names, (std::set<std::string>{"fid", "cov", "mmd", "1nna"}));
  int total = 0;
  for (int c : cat["retrieval_histogram"]["counts"]) total += c;
  EXPECT_EQ(total, 3);
  EXPECT_EQ(cat["reference_count"], 2);
  fs::remove_all(dir);
}

TEST(Evaluate, MissingPairsReported) {
  const auto dir = fresh("empty");
  try {
    evaluate_run(dir, Protocol::sketch);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "missing-pairs");
  }
}

TEST(Histogram, CountsSumToInput) {
  const auto h = make_histogram({0.0, 0.1, 0.5, 1.0, 1.0}, 4);
  int total = 0;
  for (int c : h.counts) total += c;
  EXPECT_EQ(total, 5);
  EXPECT_EQ(h.counts.back(), 2);
  EXPECT_THROW(make_histogram({1.0}, 0), Error);
}
