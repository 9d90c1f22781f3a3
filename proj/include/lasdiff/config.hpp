#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"
#include "lasdiff/dense_unet.hpp"
#include "lasdiff/sparse_unet.hpp"

namespace lasdiff {

struct StageOptimizer {
  std::string name = "adam";  // adam | adamw
  double lr = 2e-4;
  double weight_decay = 0;
  int epochs = 300;
  int batch = 32;
};

struct SamplerConfig {
  int steps = 50;
  double guidance = 3.0;
  bool ddim = false;
  bool dilate = false;  // grow the predicted shell by one voxel before subdividing
};

struct DataConfig {
  std::string dataset;  // prepared dataset directory
  int toy_shapes = 200;
  uint64_t toy_seed = 0;
  bool augment = false;
  int perturbations = 2;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  int queue_depth = 16;
};

struct RunConfig {
  int coarse = 16;
  int fine = 32;
  double shell_threshold = 0;  // 0 selects 4 / fine
  DenseUNetConfig occupancy_net;
  SparseUNetConfig sdf_net;
  double self_cond_probability = 0.5;
  double cond_dropout = 0.1;
  SamplerConfig sampler;
  StageOptimizer occupancy_opt{"adam", 2e-4, 0, 300, 32};
  StageOptimizer sdf_opt{"adamw", 1e-4, 0.01, 500, 32};
  DataConfig data;
  ServiceConfig service;
  uint64_t seed = 0;

  double threshold() const { return shell_threshold > 0 ? shell_threshold : 4.0 / fine; }
  /// Also keeps the network resolutions in step with coarse/fine.
  /// Throws Error("invalid-config").
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Defaults sized from coarse/fine: network levels follow the resolutions.
RunConfig default_config(int coarse = 16);

/// Replaces every leaf whose flattened key (path joined by '_', upper case,
/// prefix LAS_) is set in the environment. Values parse as JSON when
/// possible, otherwise as strings.
nlohmann::json apply_env_overrides(nlohmann::json j,
                                   const std::function<std::optional<std::string>(const std::string&)>& getenv);
nlohmann::json apply_env_overrides(nlohmann::json j);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace lasdiff
