#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lasdiff/attention.hpp"
#include "lasdiff/diffusion.hpp"
#include "lasdiff/nn.hpp"

namespace lasdiff {

struct DenseUNetConfig {
  std::vector<std::pair<int, int>> levels{{16, 16}, {8, 32}, {4, 64}};  // (resolution, width)
  int in_channels = 2;
  int bottleneck_blocks = 2;
  std::vector<int> attention_levels{8, 4};
  int time_dim = 64;
  CondKind cond = CondKind::none;
  AttentionMode mode = AttentionMode::view_aware_local;
  int cond_dim = 64;
  int heads = 4;
  double d_delta = kDefaultDDelta;
  uint64_t seed = 0;

  /// Throws Error("invalid-config").
  void validate() const;
  int resolution() const { return levels.front().first; }
};

void to_json(nlohmann::json& j, const DenseUNetConfig& c);
void from_json(const nlohmann::json& j, DenseUNetConfig& c);

/// Dense residual block: (GroupNorm, SiLU, 3^3 conv) twice with an additive
/// time projection in between and a 1^3 skip when the width changes.
class DenseResBlockImpl : public torch::nn::Module {
 public:
  DenseResBlockImpl(int in, int out, int time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm n1_{nullptr}, n2_{nullptr};
  torch::nn::Conv3d c1_{nullptr}, c2_{nullptr}, skip_{nullptr};
  torch::nn::Linear time_{nullptr};
};
TORCH_MODULE(DenseResBlock);

/// h * (1 + MLP(e)) with the learned null embedding for null samples.
class GlobalModulationImpl : public torch::nn::Module {
 public:
  GlobalModulationImpl(int cond_dim, int width);
  torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& embedding);

 private:
  torch::nn::Linear l1_{nullptr}, l2_{nullptr};
};
TORCH_MODULE(GlobalModulation);

/// Occupancy denoiser on a dense grid.
class DenseUNet : public torch::nn::Module, public Denoiser {
 public:
  explicit DenseUNet(DenseUNetConfig config);

  torch::Tensor predict(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                        const Conditioning& cond, const Layout& layout) override;
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                        const Conditioning& cond);

  const DenseUNetConfig& config() const { return config_; }
  bool uses_attention(int level_resolution) const;

 private:
  torch::Tensor condition(torch::Tensor h, size_t site, int level, const Conditioning& cond,
                          const torch::Tensor& embedding, std::vector<torch::Tensor>& masks);
  torch::Tensor global_embedding(const Conditioning& cond, torch::Dtype dtype) const;

  DenseUNetConfig config_;
  TimeEmbedding time_{nullptr};
  torch::nn::Conv3d in_conv_{nullptr}, out_conv_{nullptr};
  torch::nn::GroupNorm out_norm_{nullptr};
  std::vector<DenseResBlock> enc_, dec_, mid_;
  std::vector<torch::nn::Conv3d> down_, up_;
  // one conditioning site per encoder level, the bottleneck and each decoder level
  std::vector<LocalCrossAttention> attn_;
  std::vector<GlobalModulation> mod_;
  torch::Tensor null_embedding_;
};

}  // namespace lasdiff
