// lasdiff command line: prep, train-occ, train-sdf, sample, eval, serve.
#include <atomic>
#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "lasdiff/evaluate.hpp"
#include "lasdiff/pipeline.hpp"
#include "lasdiff/service.hpp"
#include "lasdiff/toy_shapes.hpp"

using namespace lasdiff;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::string run_dir = "run";
  std::vector<std::string> sets;  // key.path=value
  int threads = 0;
};

void set_path(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error("invalid-config", "expected key=value: " + assignment);
  auto ptr = "/" + assignment.substr(0, eq);
  std::replace(ptr.begin(), ptr.end(), '.', '/');
  const auto text = assignment.substr(eq + 1);
  auto v = nlohmann::json::parse(text, nullptr, false);
  j[nlohmann::json::json_pointer(ptr)] = v.is_discarded() ? nlohmann::json(text) : v;
}

/// defaults < config file < LAS_* environment < --set flags
RunConfig resolve_config(const Common& c) {
  nlohmann::json j = default_config();
  if (!c.config_path.empty()) {
    j = load_config(c.config_path);
  } else if (fs::exists(fs::path(c.run_dir) / "config.json")) {
    j = load_config(fs::path(c.run_dir) / "config.json");
  } else {
    j = apply_env_overrides(j);
  }
  // a coarse override rescales the default levels unless they are given too
  for (const auto& s : c.sets)
    if (s.rfind("coarse=", 0) == 0) {
      const auto cfg = default_config(std::stoi(s.substr(7)));
      j["coarse"] = cfg.coarse;
      j["fine"] = cfg.fine;
      j["occupancy_net"]["levels"] = cfg.occupancy_net.levels;
      j["occupancy_net"]["attention_levels"] = cfg.occupancy_net.attention_levels;
      j["sdf_net"]["levels"] = cfg.sdf_net.levels;
    }
  for (const auto& s : c.sets)
    if (s.rfind("coarse=", 0) != 0) set_path(j, s);
  auto cfg = j.get<RunConfig>();
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "run config JSON");
  app->add_option("-r,--run", c.run_dir, "run directory");
  app->add_option("--set", c.sets, "override a config entry, e.g. sampler.steps=25");
  app->add_option("--threads", c.threads, "torch intra-op threads (0 keeps the default)");
}

Dataset dataset_for(const RunConfig& cfg, const PatchEncoder& encoder) {
  const bool sketches = cfg.occupancy_net.cond == CondKind::sketch;
  if (!cfg.data.dataset.empty()) return load_dataset(cfg.data.dataset, cfg, sketches ? &encoder : nullptr);
  DatasetOptions o;
  o.sketches = sketches;
  o.perturbations = cfg.data.perturbations;
  o.augment = cfg.data.augment;
  o.seed = cfg.seed;
  return build_dataset(make_toy_shapes(cfg.data.toy_shapes, cfg.data.toy_seed), cfg, &encoder, o);
}

int train(const Common& c, bool occupancy, int epochs, bool resume) {
  const auto cfg = resolve_config(c);
  const RunLayout run{c.run_dir};
  run.create();
  save_config(run.config(), cfg);
  RandomPatchEncoder encoder;
  std::cout << "preparing data\n";
  const auto data = dataset_for(cfg, encoder);
  std::cout << data.shapes.size() << " shapes\n";
  TrainOptions o;
  o.run_dir = run.root;
  o.resume = resume;
  o.epochs = epochs;
  o.on_epoch = [](int e, double loss) { std::cout << "epoch " << e << " loss " << loss << std::endl; };
  const auto r = occupancy ? train_occupancy(cfg, data, o) : train_sdf(cfg, data, o);
  std::cout << "zero-predictor loss " << r.zero_baseline << ", checkpoint " << r.checkpoint.string() << "\n";
  return 0;
}

std::atomic<bool> g_interrupt{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage sketch/category conditioned SDF diffusion"};
  app.require_subcommand(1);
  Common common;

  auto* prep = app.add_subcommand("prep", "write a procedural dataset directory");
  add_common(prep, common);
  std::string out_dir = "data";
  prep->add_option("-o,--out", out_dir, "dataset directory");

  int epochs = -1;
  bool resume = false;
  auto* train_occ = app.add_subcommand("train-occ", "train the occupancy stage");
  auto* train_sdf_cmd = app.add_subcommand("train-sdf", "train the SDF stage");
  for (auto* sub : {train_occ, train_sdf_cmd}) {
    add_common(sub, common);
    sub->add_option("--epochs", epochs, "override the configured epoch count");
    sub->add_flag("--resume", resume, "continue from the stage checkpoint");
  }

  auto* sample = app.add_subcommand("sample", "generate meshes");
  add_common(sample, common);
  std::string sketch, view = "front", category, name = "sample", reference, reference_occ;
  uint64_t seed = 0;
  int count = 1;
  sample->add_option("--sketch", sketch, "input sketch PNG");
  sample->add_option("--view", view, "predefined view of the sketch");
  sample->add_option("--category", category, "class name");
  sample->add_option("--seed", seed);
  sample->add_option("-n,--num", count, "samples with seeds seed..seed+n-1");
  sample->add_option("--name", name, "output name prefix");
  sample->add_option("--reference", reference, "paired ground-truth OBJ (sketch evaluation)");
  sample->add_option("--reference-occupancy", reference_occ, "paired ground-truth shell field");

  auto* eval = app.add_subcommand("eval", "evaluate generated samples");
  add_common(eval, common);
  std::string protocol = "sketch";
  eval->add_option("--protocol", protocol)->check(CLI::IsMember({"sketch", "category"}));

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  add_common(serve, common);
  int port = -1;
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (common.threads > 0) torch::set_num_threads(common.threads);
    if (prep->parsed()) {
      const auto cfg = resolve_config(common);
      DatasetOptions o;
      o.perturbations = cfg.data.perturbations;
      o.seed = cfg.seed;
      prepare_dataset_dir(out_dir, make_toy_shapes(cfg.data.toy_shapes, cfg.data.toy_seed), cfg, o);
      std::cout << "wrote " << (fs::path(out_dir) / "manifest.jsonl").string() << "\n";
      return 0;
    }
    if (train_occ->parsed()) return train(common, true, epochs, resume);
    if (train_sdf_cmd->parsed()) return train(common, false, epochs, resume);

    const RunLayout run{common.run_dir};
    if (sample->parsed()) {
      auto models = load_models(run.occupancy_checkpoint(), run.sdf_checkpoint());
      auto sampler = resolve_config(common).sampler;
      Conditioning cond = null_condition(models.config.occupancy_net.cond, models.config.occupancy_net.cond_dim);
      SampleRecord base;
      if (!sketch.empty()) {
        RandomPatchEncoder encoder;
        const auto image = resize(read_png(sketch), 224, 224);
        const auto names = predefined_view_names();
        const auto it = std::find(names.begin(), names.end(), view);
        if (it == names.end()) throw Error("invalid-view", view);
        cond = sketch_condition(encode_sketch(image, encoder), static_cast<int>(it - names.begin()));
        fs::create_directories(run.samples());
        base.sketch = "samples/" + name + ".input.png";
        write_png(run.root / base.sketch, image);
        base.view = view;
        base.true_view = predefined_view(view);
      } else if (!category.empty()) {
        cond = category_condition(category, models.config.occupancy_net.cond_dim);
        base.category = category;
      }
      if (!reference.empty()) {
        fs::create_directories(run.root / "reference");
        base.reference_mesh = "reference/" + fs::path(reference).filename().string();
        fs::copy_file(reference, run.root / base.reference_mesh, fs::copy_options::overwrite_existing);
      }
      if (!reference_occ.empty()) {
        base.reference_occupancy = "reference/" + fs::path(reference_occ).filename().string();
        fs::create_directories(run.root / "reference");
        fs::copy_file(reference_occ, run.root / base.reference_occupancy, fs::copy_options::overwrite_existing);
      }
      for (int k = 0; k < count; ++k) {
        auto rec = base;
        rec.seed = seed + k;
        rec.name = name + "-" + std::to_string(rec.seed);
        try {
          const auto g = generate(models, cond, rec.seed, sampler);
          write_sample(run, rec, g);
          std::cout << rec.name << ": " << g.mesh.triangles.size() << " triangles";
          for (const auto& w : g.warnings) std::cout << " [" << w << "]";
          std::cout << "\n";
        } catch (const EmptyGenerationError& e) {
          std::cout << rec.name << ": empty-generation (max stage-1 value "
                    << *std::max_element(e.raw().values().begin(), e.raw().values().end()) << ")\n";
        }
      }
      return 0;
    }
    if (eval->parsed()) {
      const auto report = evaluate_run(run.root, protocol_from_string(protocol));
      for (const auto& m : report["metrics"]) std::cout << m["metric"].get<std::string>() << " " << m["value"] << "\n";
      return 0;
    }
    if (serve->parsed()) {
      const auto cfg = resolve_config(common);
      ServiceOptions o;
      o.host = cfg.service.host;
      o.port = port >= 0 ? port : cfg.service.port;
      o.cors_origin = cfg.service.cors_origin;
      o.queue_depth = static_cast<size_t>(cfg.service.queue_depth);
      o.run_dir = run.root;
      o.sampler = cfg.sampler;
      std::shared_ptr<Models> models;
      if (fs::exists(run.occupancy_checkpoint()) && fs::exists(run.sdf_checkpoint())) {
        models = std::make_shared<Models>(load_models(run.occupancy_checkpoint(), run.sdf_checkpoint()));
        o.checkpoints = {{"occupancy", run.occupancy_checkpoint().string()}, {"sdf", run.sdf_checkpoint().string()}};
      } else {
        std::cerr << "no checkpoints under " << run.checkpoints().string() << ", generation disabled\n";
      }
      GenerationService service(o, models);
      std::signal(SIGINT, [](int) { g_interrupt = true; });
      std::signal(SIGTERM, [](int) { g_interrupt = true; });
      const int bound = service.start();
      std::cout << "listening on " << o.host << ":" << bound << std::endl;
      service.wait(&g_interrupt);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
