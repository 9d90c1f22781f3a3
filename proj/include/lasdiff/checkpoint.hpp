#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lasdiff/nn.hpp"

namespace lasdiff {

// LASC container: "LASC", schema version u32, config JSON, metadata JSON,
// named parameters, optional optimizer moments and generator state.
inline constexpr uint32_t kCheckpointVersion = 1;

struct OptimizerState {
  int64_t steps = 0;
  nlohmann::json options;
  std::vector<torch::Tensor> first, second;
};

struct Checkpoint {
  uint32_t version = kCheckpointVersion;
  nlohmann::json config;
  nlohmann::json meta;
  std::vector<std::pair<std::string, torch::Tensor>> params;
  std::optional<OptimizerState> optimizer;
  torch::Tensor rng_state;  // uint8, empty when absent
};

Checkpoint capture_checkpoint(const torch::nn::Module& module, const nlohmann::json& config,
                              const nlohmann::json& meta = {}, Adam* optimizer = nullptr,
                              const torch::Generator* gen = nullptr);

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws Error("malformed-checkpoint").
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers by name. Throws Error("checkpoint-mismatch").
void restore_module(torch::nn::Module& module, const Checkpoint& ckpt);
void restore_optimizer(Adam& optimizer, const Checkpoint& ckpt);
void restore_generator(torch::Generator& gen, const Checkpoint& ckpt);

}  // namespace lasdiff
