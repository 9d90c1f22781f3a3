#include "lasdiff/pipeline.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "lasdiff/error.hpp"
#include "lasdiff/fields.hpp"

namespace lasdiff {

namespace {

int view_index(const std::string& bucket) {
  const auto names = predefined_view_names();
  const auto it = std::find(names.begin(), names.end(), bucket);
  if (it == names.end()) throw Error("dataset-mismatch", "unknown view bucket " + bucket);
  return static_cast<int>(it - names.begin());
}

SketchSample make_sketch_sample(GrayImage sketch, const CameraView& true_view, int view, const PatchEncoder& encoder) {
  SketchSample s;
  const auto grid = encode_sketch(sketch, encoder);
  s.sketch = std::move(sketch);
  s.true_view = true_view;
  s.view = view;
  s.patches = grid.features;
  s.global = grid.global;
  return s;
}

SparseVoxelGrid normalized_shell(const DenseField3D& fine_sdf, const DenseField3D& occupancy) {
  auto shell = restrict_to_sparse(fine_sdf, subdivide_occupied(occupancy));
  const auto norm = SdfNormalization::for_resolution(fine_sdf.resolution());
  for (auto& v : shell.values) v = norm.normalize(v);
  return shell;
}

torch::Tensor occupancy_tensor(const DenseField3D& f) {
  std::vector<float> v(f.values().begin(), f.values().end());
  const int n = f.resolution();
  return torch::tensor(v).view({1, n, n, n});
}

DenseField3D field_from_tensor(const torch::Tensor& t, FieldKind kind) {
  auto c = t.detach().to(torch::kFloat64).contiguous().view({-1});
  const int n = static_cast<int>(std::lround(std::cbrt(static_cast<double>(c.numel()))));
  std::vector<double> v(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
  return DenseField3D(n, std::move(v), kind);
}

Adam make_optimizer(torch::nn::Module& net, const StageOptimizer& o) {
  return Adam(net.parameters(), adam_options(o.name, o.lr, o.weight_decay));
}

struct EpochState {
  int epoch = 0;
  std::vector<double> losses;
};

/// Restores net/optimizer/generator from `path` and returns the finished epochs.
EpochState resume_from(const std::filesystem::path& path, torch::nn::Module& net, Adam& opt, torch::Generator& gen,
                       const nlohmann::json& config) {
  const auto ckpt = load_checkpoint(path);
  if (ckpt.config != config) throw Error("checkpoint-mismatch", "run config differs from " + path.string());
  restore_module(net, ckpt);
  restore_optimizer(opt, ckpt);
  restore_generator(gen, ckpt);
  EpochState s;
  s.epoch = ckpt.meta.at("epoch");
  s.losses = ckpt.meta.at("epoch_loss").get<std::vector<double>>();
  return s;
}

template <typename BatchFn>
TrainResult run_training(const std::string& stage, const RunConfig& config, torch::nn::Module& net, Denoiser& denoiser,
                         const StageOptimizer& opt_cfg, int64_t count, const TrainOptions& options, double baseline,
                         BatchFn&& make_batch) {
  TrainResult result;
  result.zero_baseline = baseline;
  auto opt = make_optimizer(net, opt_cfg);
  auto gen = make_generator(config.seed * 1000003ULL + (stage == "sdf" ? 2 : 1));
  const nlohmann::json cfg_json = config;
  const auto path = options.run_dir / "checkpoints" / (stage + ".lasc");
  EpochState state;
  if (options.resume && std::filesystem::exists(path)) state = resume_from(path, net, opt, gen, cfg_json);
  const int epochs = options.epochs >= 0 ? options.epochs : opt_cfg.epochs;
  const TrainingOptions topts{config.self_cond_probability, config.cond_dropout};
  net.train();
  for (int epoch = state.epoch; epoch < epochs; ++epoch) {
    const auto perm = torch::randperm(count, gen, torch::kInt64);
    double sum = 0;
    int batches = 0;
    for (int64_t start = 0; start < count; start += opt_cfg.batch) {
      const int64_t end = std::min<int64_t>(count, start + opt_cfg.batch);
      std::vector<int64_t> rows(perm.data_ptr<int64_t>() + start, perm.data_ptr<int64_t>() + end);
      opt.zero_grad();
      auto loss = make_batch(rows, gen, [&](const torch::Tensor& x0, const Conditioning& cond, const Layout& layout) {
        return training_step(denoiser, x0, cond, layout, topts, gen);
      });
      loss.backward();
      opt.step();
      const double l = loss.template item<double>();
      result.step_loss.push_back(l);
      sum += l;
      ++batches;
    }
    state.losses.push_back(sum / std::max(1, batches));
    state.epoch = epoch + 1;
    if (options.on_epoch) options.on_epoch(epoch, state.losses.back());
    if (!options.run_dir.empty()) {
      nlohmann::json meta = {{"stage", stage},
                             {"epoch", state.epoch},
                             {"epoch_loss", state.losses},
                             {"zero_baseline", baseline},
                             {"samples", count}};
      save_checkpoint(path, capture_checkpoint(net, cfg_json, meta, &opt, &gen));
    }
  }
  result.epoch_loss = state.losses;
  result.steps = opt.steps();
  result.checkpoint = options.run_dir.empty() ? std::filesystem::path{} : path;
  return result;
}

}  // namespace

Dataset build_dataset(const std::vector<Shape>& input, const RunConfig& config, const PatchEncoder* encoder,
                      const DatasetOptions& options) {
  config.validate();
  if (options.sketches && !encoder) throw Error("dataset-mismatch", "sketch dataset needs an encoder");
  std::vector<Shape> shapes = input;
  std::mt19937_64 rng(options.seed);
  std::vector<DenseField3D> sdfs;
  for (const auto& s : shapes) sdfs.push_back(shape_sdf(s, config.fine));
  if (options.augment) {
    for (auto& a : build_augmented_shapes(input, sdfs, rng)) {
      shapes.push_back(std::move(a.shape));
      sdfs.push_back(std::move(a.sdf));
    }
  }
  Dataset data;
  data.coarse = config.coarse;
  data.fine = config.fine;
  data.encoder_id = encoder ? encoder->id() : "";
  std::map<std::string, std::vector<SketchRecord>> by_shape;
  if (options.sketches) {
    SketchOptions so;
    so.perturbations_per_view = options.perturbations;
    so.seed = options.seed;
    for (auto& r : build_sketch_dataset(shapes, so)) by_shape[r.shape_id].push_back(std::move(r));
  }
  for (size_t i = 0; i < shapes.size(); ++i) {
    TrainingShape t;
    t.id = shapes[i].id;
    t.family = shapes[i].family;
    t.occupancy = derive_occupancy(sdfs[i], config.coarse, config.threshold());
    t.shell = normalized_shell(sdfs[i], t.occupancy);
    if (t.shell.size() == 0) continue;
    t.parts = shapes[i].parts;
    if (options.sketches) {
      auto it = by_shape.find(t.id);
      if (it == by_shape.end()) continue;
      for (auto& r : it->second)
        t.sketches.push_back(make_sketch_sample(std::move(r.sketch), r.true_view, r.view_index, *encoder));
    }
    data.shapes.push_back(std::move(t));
  }
  return data;
}

void prepare_dataset_dir(const std::filesystem::path& dir, const std::vector<Shape>& shapes, const RunConfig& config,
                         const DatasetOptions& options) {
  config.validate();
  std::vector<PreparedShape> prepared;
  for (const auto& s : shapes) prepared.push_back(prepare_shape(s, config.fine, config.coarse, config.threshold()));
  SketchOptions so;
  so.perturbations_per_view = options.perturbations;
  so.seed = options.seed;
  write_dataset(dir, prepared, build_sketch_dataset(shapes, so));
}

Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& config, const PatchEncoder* encoder) {
  config.validate();
  const auto entries = read_manifest(dir / "manifest.jsonl");
  Dataset data;
  data.coarse = config.coarse;
  data.fine = config.fine;
  data.encoder_id = encoder ? encoder->id() : "";
  std::map<std::string, size_t> index;
  for (const auto& e : entries) {
    auto it = index.find(e.shape_id);
    if (it == index.end()) {
      auto sdf = std::get<DenseField3D>(read_field(dir / e.sdf));
      auto occ = std::get<DenseField3D>(read_field(dir / e.occupancy));
      if (sdf.resolution() != config.fine || occ.resolution() != config.coarse)
        throw Error("dataset-mismatch", "field resolution of " + e.shape_id + " does not match the config");
      TrainingShape t;
      t.id = e.shape_id;
      const auto dash = t.id.rfind('-');
      t.family = dash == std::string::npos ? "" : t.id.substr(dash + 1);
      t.shell = normalized_shell(sdf, occ);
      t.occupancy = std::move(occ);
      it = index.emplace(e.shape_id, data.shapes.size()).first;
      data.shapes.push_back(std::move(t));
    }
    if (encoder) {
      CameraView v = predefined_view(e.view_bucket);
      v.azimuth = e.azimuth;
      v.elevation = e.elevation;
      v.distance = e.distance;
      v.fov_y = e.fov_y;
      data.shapes[it->second].sketches.push_back(
          make_sketch_sample(read_png(dir / e.sketch), v, view_index(e.view_bucket), *encoder));
    }
  }
  return data;
}

double zero_predictor_loss_occupancy(const Dataset& data) {
  double sum = 0;
  size_t n = 0;
  for (const auto& s : data.shapes)
    for (double v : s.occupancy.values()) sum += v * v, ++n;
  return n ? sum / n : 0;
}

double zero_predictor_loss_sdf(const Dataset& data) {
  // batch losses average over rows, so weight shapes by their shell size
  double sum = 0;
  size_t n = 0;
  for (const auto& s : data.shapes)
    for (double v : s.shell.values) sum += v * v, ++n;
  return n ? sum / n : 0;
}

Conditioning dataset_condition(const Dataset& data, const DenseUNetConfig& net, const std::vector<int64_t>& rows,
                               const std::vector<int>& sketch_choice) {
  Conditioning c;
  c.kind = net.cond;
  const auto b = static_cast<int64_t>(rows.size());
  c.null_mask = torch::zeros({b}, torch::kBool);
  if (net.cond == CondKind::sketch) {
    std::vector<torch::Tensor> p, g;
    for (size_t i = 0; i < rows.size(); ++i) {
      const auto& s = data.shapes[rows[i]].sketches.at(sketch_choice[i]);
      p.push_back(s.patches);
      g.push_back(s.global);
      c.views.push_back(s.view);
    }
    c.patches = torch::stack(p);
    c.global = torch::stack(g);
  } else if (net.cond == CondKind::category) {
    std::vector<torch::Tensor> g;
    for (auto r : rows) g.push_back(category_embedding(data.shapes[r].family, net.cond_dim));
    c.global = torch::stack(g);
  }
  return c;
}

TrainResult train_occupancy(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  if (data.coarse != config.coarse || data.shapes.empty())
    throw Error("dataset-mismatch", "dataset resolution or size does not match the occupancy stage");
  const auto& net_cfg = config.occupancy_net;
  if (net_cfg.cond == CondKind::sketch)
    for (const auto& s : data.shapes)
      if (s.sketches.empty()) throw Error("dataset-mismatch", "shape " + s.id + " has no sketch");
  DenseUNet net(net_cfg);
  std::vector<torch::Tensor> x0s;
  for (const auto& s : data.shapes) x0s.push_back(occupancy_tensor(s.occupancy));
  auto batch = [&](const std::vector<int64_t>& rows, torch::Generator& gen, auto&& step) {
    std::vector<torch::Tensor> xs;
    std::vector<int> choice;
    for (auto r : rows) {
      xs.push_back(x0s[r]);
      const auto n = static_cast<int64_t>(data.shapes[r].sketches.size());
      choice.push_back(n > 1 ? static_cast<int>(torch::randint(n, {1}, gen).item<int64_t>()) : 0);
    }
    Layout layout;
    layout.batch = static_cast<int64_t>(rows.size());
    return step(torch::stack(xs), dataset_condition(data, net_cfg, rows, choice), layout);
  };
  return run_training("occupancy", config, net, net, config.occupancy_opt, static_cast<int64_t>(data.shapes.size()),
                      options, zero_predictor_loss_occupancy(data), batch);
}

TrainResult train_sdf(const RunConfig& config, const Dataset& data, const TrainOptions& options) {
  config.validate();
  if (data.fine != config.fine || data.shapes.empty())
    throw Error("dataset-mismatch", "dataset resolution or size does not match the sdf stage");
  SparseUNet net(config.sdf_net);
  const int depth = static_cast<int>(config.sdf_net.levels.size());
  auto batch = [&](const std::vector<int64_t>& rows, torch::Generator&, auto&& step) {
    std::vector<const SparseVoxelGrid*> grids;
    std::vector<float> values;
    for (auto r : rows) {
      grids.push_back(&data.shapes[r].shell);
      for (double v : data.shapes[r].shell.values) values.push_back(static_cast<float>(v));
    }
    auto layout = sparse_layout(SparseStructure::build(grids, depth));
    return step(torch::tensor(values), Conditioning{}, layout);
  };
  return run_training("sdf", config, net, net, config.sdf_opt, static_cast<int64_t>(data.shapes.size()), options,
                      zero_predictor_loss_sdf(data), batch);
}

Models load_models(const std::filesystem::path& occupancy_ckpt, const std::filesystem::path& sdf_ckpt) {
  const auto occ = load_checkpoint(occupancy_ckpt);
  const auto sdf = load_checkpoint(sdf_ckpt);
  Models m;
  m.config = occ.config.get<RunConfig>();
  const auto sdf_cfg = sdf.config.get<RunConfig>();
  if (sdf_cfg.fine != m.config.fine || sdf_cfg.coarse != m.config.coarse)
    throw Error("checkpoint-mismatch", "stage checkpoints use different resolutions");
  m.config.sdf_net = sdf_cfg.sdf_net;
  m.occupancy = std::make_shared<DenseUNet>(m.config.occupancy_net);
  restore_module(*m.occupancy, occ);
  m.occupancy->eval();
  m.sdf = std::make_shared<SparseUNet>(m.config.sdf_net);
  restore_module(*m.sdf, sdf);
  m.sdf->eval();
  return m;
}

DenseField3D sample_occupancy(DenseUNet& net, const Conditioning& cond, uint64_t seed, const SamplerConfig& sampler) {
  const int n = net.config().resolution();
  auto gen = make_generator(seed);
  Layout layout;
  layout.batch = 1;
  SamplerOptions so{sampler.steps, sampler.guidance, PayloadKind::occupancy, sampler.ddim};
  auto x0 = ddpm_sample(net, {1, 1, n, n, n}, cond, layout, so, gen);
  return field_from_tensor(x0, FieldKind::occupancy);
}

Generation complete_generation(SparseUNet& net, const DenseField3D& raw, uint64_t seed, const SamplerConfig& sampler) {
  Generation g;
  g.raw = raw;
  g.occupancy = DenseField3D(raw.resolution(), 0.0, FieldKind::occupancy);
  auto& occ = g.occupancy.mutable_values();
  bool any = false;
  for (size_t i = 0; i < occ.size(); ++i) {
    occ[i] = raw.values()[i] > 0.5 ? 1.0 : 0.0;
    any = any || occ[i] > 0;
  }
  if (!any) throw EmptyGenerationError(raw);
  const auto shell = subdivide_occupied(sampler.dilate ? dilate_occupancy(g.occupancy) : g.occupancy);
  if (shell.resolution != net.config().resolution())
    throw Error("checkpoint-mismatch", "sdf network resolution does not match the stage-1 output");
  auto structure = SparseStructure::build({&shell}, static_cast<int>(net.config().levels.size()));
  auto layout = sparse_layout(structure);
  // stage-2 noise stream is independent of stage 1
  auto gen = make_generator(seed ^ 0x9e3779b97f4a7c15ULL);
  SamplerOptions so{sampler.steps, 1.0, PayloadKind::sdf, sampler.ddim};
  auto values = ddpm_sample(net, {static_cast<int64_t>(shell.size())}, Conditioning{}, layout, so, gen);
  auto v = values.to(torch::kFloat64).contiguous();
  const auto norm = SdfNormalization::for_resolution(shell.resolution);
  g.sparse_sdf = shell;
  for (size_t i = 0; i < shell.size(); ++i) g.sparse_sdf.values[i] = norm.denormalize(v.data_ptr<double>()[i]);
  auto completed = complete_field(g.sparse_sdf, norm.band);
  g.completed = std::move(completed.field);
  g.leaky_shell = completed.leaky_shell;
  if (g.leaky_shell) g.warnings.push_back("leaky-shell");
  g.mesh = marching_cubes_dual(g.completed);
  if (g.mesh.empty()) g.warnings.push_back("empty-mesh");
  return g;
}

Generation generate(Models& models, const Conditioning& cond, uint64_t seed, const SamplerConfig& sampler) {
  torch::NoGradGuard no_grad;
  const auto raw = sample_occupancy(*models.occupancy, cond, seed, sampler);
  return complete_generation(*models.sdf, raw, seed, sampler);
}

Conditioning sketch_condition(const PatchGrid& grid, int view) {
  Conditioning c;
  c.kind = CondKind::sketch;
  c.patches = grid.features.unsqueeze(0);
  c.global = grid.global.unsqueeze(0);
  c.null_mask = torch::zeros({1}, torch::kBool);
  c.views = {view};
  return c;
}

Conditioning category_condition(const std::string& name, int dim) {
  Conditioning c;
  c.kind = CondKind::category;
  c.global = category_embedding(name, dim).unsqueeze(0);
  c.null_mask = torch::zeros({1}, torch::kBool);
  return c;
}

Conditioning null_condition(CondKind kind, int dim) {
  Conditioning c;
  c.kind = kind;
  c.null_mask = torch::ones({1}, torch::kBool);
  if (kind == CondKind::sketch) {
    const PatchLayout layout;
    c.patches = torch::zeros({1, layout.count(), dim});
    c.global = torch::zeros({1, dim});
    c.views = {2};
  } else if (kind == CondKind::category) {
    c.global = torch::zeros({1, dim});
  }
  return c;
}

void RunLayout::create() const {
  for (const auto& d : {checkpoints(), samples(), reports()}) std::filesystem::create_directories(d);
}

}  // namespace lasdiff
