#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lasdiff/checkpoint.hpp"
#include "lasdiff/config.hpp"
#include "lasdiff/dataprep.hpp"
#include "lasdiff/dense_unet.hpp"
#include "lasdiff/mesh.hpp"
#include "lasdiff/patch_encoder.hpp"
#include "lasdiff/sparse_unet.hpp"

namespace lasdiff {

struct SketchSample {
  GrayImage sketch;
  CameraView true_view;
  int view = 0;  // predefined view index used for projection
  torch::Tensor patches;  // [P, D]
  torch::Tensor global;   // [D]
};

struct TrainingShape {
  std::string id;
  std::string family;
  DenseField3D occupancy;  // coarse shell
  SparseVoxelGrid shell;   // fine shell coords with normalized SDF values
  std::vector<SketchSample> sketches;
  std::vector<TriangleMesh> parts;  // empty when loaded from disk
};

struct Dataset {
  int coarse = 0;
  int fine = 0;
  std::string encoder_id;
  std::vector<TrainingShape> shapes;
};

struct DatasetOptions {
  bool sketches = true;
  int perturbations = 1;  // per predefined view
  bool augment = false;   // add one translated union per shape
  uint64_t seed = 0;
};

/// In-memory training set. Sketch views are projected with their bucket's
/// predefined camera.
Dataset build_dataset(const std::vector<Shape>& shapes, const RunConfig& config, const PatchEncoder* encoder,
                      const DatasetOptions& options);

/// Prepares and writes a dataset directory (fields, sketches, manifest).
void prepare_dataset_dir(const std::filesystem::path& dir, const std::vector<Shape>& shapes, const RunConfig& config,
                         const DatasetOptions& options);
/// Reads a directory written by prepare_dataset_dir. Throws Error("dataset-mismatch").
Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& config, const PatchEncoder* encoder);

/// Mean squared payload, the loss of a predictor that always outputs zero.
double zero_predictor_loss_occupancy(const Dataset& data);
double zero_predictor_loss_sdf(const Dataset& data);

struct TrainOptions {
  std::filesystem::path run_dir;  // checkpoints/<stage>.lasc is rewritten after every epoch
  bool resume = false;
  int epochs = -1;  // overrides the config when >= 0
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> step_loss;  // this call only
  double zero_baseline = 0;
  int64_t steps = 0;
  std::filesystem::path checkpoint;
};

/// Throws Error("dataset-mismatch") when resolutions or conditioning do not fit.
TrainResult train_occupancy(const RunConfig& config, const Dataset& data, const TrainOptions& options);
TrainResult train_sdf(const RunConfig& config, const Dataset& data, const TrainOptions& options);

/// Batch assembly used by the trainers.
Conditioning dataset_condition(const Dataset& data, const DenseUNetConfig& net, const std::vector<int64_t>& rows,
                               const std::vector<int>& sketch_choice);

struct Models {
  RunConfig config;
  std::shared_ptr<DenseUNet> occupancy;
  std::shared_ptr<SparseUNet> sdf;
};

Models load_models(const std::filesystem::path& occupancy_ckpt, const std::filesystem::path& sdf_ckpt);

struct Generation {
  DenseField3D raw;        // stage-1 x0 estimate
  DenseField3D occupancy;  // thresholded at 0.5
  SparseVoxelGrid sparse_sdf;  // de-normalized
  DenseField3D completed;
  TriangleMesh mesh;
  bool leaky_shell = false;
  std::vector<std::string> warnings;
};

/// Stage 1 produced no occupied voxel.
class EmptyGenerationError : public Error {
 public:
  explicit EmptyGenerationError(DenseField3D raw)
      : Error("empty-generation", "stage-1 shell is empty"), raw_(std::move(raw)) {}
  const DenseField3D& raw() const { return raw_; }

 private:
  DenseField3D raw_;
};

/// Stage 1 only; `cond` holds one sample.
DenseField3D sample_occupancy(DenseUNet& net, const Conditioning& cond, uint64_t seed, const SamplerConfig& sampler);
/// Stage 2 on a given coarse shell.
Generation complete_generation(SparseUNet& net, const DenseField3D& raw, uint64_t seed, const SamplerConfig& sampler);
/// Both stages. Throws EmptyGenerationError.
Generation generate(Models& models, const Conditioning& cond, uint64_t seed, const SamplerConfig& sampler);

Conditioning sketch_condition(const PatchGrid& grid, int view);
Conditioning category_condition(const std::string& name, int dim = 64);
Conditioning null_condition(CondKind kind, int dim = 64);

/// run_dir/{config.json, checkpoints/, samples/, reports/}
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path samples() const { return root / "samples"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path occupancy_checkpoint() const { return checkpoints() / "occupancy.lasc"; }
  std::filesystem::path sdf_checkpoint() const { return checkpoints() / "sdf.lasc"; }
  void create() const;
};

}  // namespace lasdiff
