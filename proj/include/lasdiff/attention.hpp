#pragma once

#include <torch/torch.h>

#include <vector>

#include "lasdiff/camera.hpp"
#include "lasdiff/conditioning.hpp"

namespace lasdiff {

/// Default neighbourhood radius: four patch widths.
inline constexpr double kDefaultDDelta = 4.0 * 14.0;

/// [R, P] bool mask of a level grid seen from a predefined view; cached.
torch::Tensor view_mask(int view_index, int level_resolution, double d_delta, const PatchLayout& layout = {});

/// Batched mask [B, R, P + 1]; the last column is the learned null key, the
/// only column open to null-condition samples.
torch::Tensor batch_attention_mask(const Conditioning& cond, AttentionMode mode, int level_resolution,
                                   double d_delta, const PatchLayout& layout = {});

/// 3D sinusoidal voxel-index encoding [r^3, 6F] and 2D patch encoding [P, 4F].
torch::Tensor voxel_position_features(int level_resolution, int frequencies);
torch::Tensor patch_position_features(const PatchLayout& layout, int frequencies);

struct CrossAttentionConfig {
  int width = 32;      // voxel feature width
  int cond_dim = 64;   // patch feature width
  int heads = 4;
  int level_resolution = 8;
  int pe_frequencies = 8;
  PatchLayout layout;
};

/// One-layer masked multi-head cross-attention from voxels to patches with a
/// residual update. Rows without any open column receive a zero update.
class LocalCrossAttentionImpl : public torch::nn::Module {
 public:
  explicit LocalCrossAttentionImpl(const CrossAttentionConfig& config);

  /// voxels [B, R, C], patches [B, P, D], mask [B, R, P + 1] -> [B, R, C].
  torch::Tensor forward(const torch::Tensor& voxels, const torch::Tensor& patches, const torch::Tensor& mask);
  /// Attention weights [B, H, R, P + 1] of the same computation.
  torch::Tensor weights(const torch::Tensor& voxels, const torch::Tensor& patches, const torch::Tensor& mask);

  const CrossAttentionConfig& config() const { return config_; }

 private:
  torch::Tensor attend(const torch::Tensor& voxels, const torch::Tensor& patches, const torch::Tensor& mask,
                       torch::Tensor* weights_out);

  CrossAttentionConfig config_;
  torch::nn::GroupNorm norm_{nullptr};
  torch::nn::Linear voxel_pe_{nullptr}, patch_pe_{nullptr};
  torch::nn::Linear wq_{nullptr}, wk_{nullptr}, wv_{nullptr};
  torch::Tensor null_token_;
  torch::Tensor voxel_pos_, patch_pos_;
};
TORCH_MODULE(LocalCrossAttention);

}  // namespace lasdiff
