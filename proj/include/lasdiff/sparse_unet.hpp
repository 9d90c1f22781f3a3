#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lasdiff/diffusion.hpp"
#include "lasdiff/nn.hpp"
#include "lasdiff/fields.hpp"

namespace lasdiff {

struct SparseUNetConfig {
  std::vector<std::pair<int, int>> levels{{32, 16}, {16, 32}, {8, 64}};
  int in_channels = 2;
  int bottleneck_blocks = 2;
  int time_dim = 64;
  uint64_t seed = 0;

  void validate() const;
  int resolution() const { return levels.front().first; }
};

void to_json(nlohmann::json& j, const SparseUNetConfig& c);
void from_json(const nlohmann::json& j, SparseUNetConfig& c);

/// One octree level of a batch of sparse grids. Rows are sorted by
/// (sample, i, j, k); index `rows` in the tables below means "absent".
struct SparseLevel {
  int resolution = 0;
  int64_t rows = 0;
  torch::Tensor coords;     // [M, 4] int64 (sample, i, j, k)
  torch::Tensor batch;      // [M] int64
  torch::Tensor neighbors;  // [M, 27] int64, offsets (di, dj, dk) in {-1,0,1}^3, x-major
  torch::Tensor taps;           // [27, M] neighbors transposed
  torch::Tensor mirrored_taps;  // [27, M] with the offset order reversed
  torch::Tensor children;   // [M, 8] rows of the finer level (finer.rows when absent); empty at the finest level
  torch::Tensor parent;     // [M] row of the coarser level; empty at the coarsest level
  torch::Tensor slot;       // [M, 1] parent * 8 + child slot
  torch::Tensor counts;     // [B] rows per sample
};

struct SparseStructure {
  int64_t batch = 0;
  std::vector<SparseLevel> levels;  // finest first

  /// Builds `depth` levels from one sorted coordinate set per sample.
  static std::shared_ptr<const SparseStructure> build(const std::vector<const SparseVoxelGrid*>& grids, int depth);
};

Layout sparse_layout(std::shared_ptr<const SparseStructure> structure);

/// Gathers the 27 neighbours (zero when absent) and applies one dense map.
class SparseConvImpl : public torch::nn::Module {
 public:
  SparseConvImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& x, const SparseLevel& level);

 private:
  int in_;
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(SparseConv);

/// Stride-2 convolution over the 8 child slots of each parent.
class SparseDownImpl : public torch::nn::Module {
 public:
  SparseDownImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& fine, const SparseLevel& fine_level, const SparseLevel& coarse);

 private:
  int in_;
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(SparseDown);

/// GroupNorm whose statistics are taken per sample over that sample's rows.
class SparseGroupNormImpl : public torch::nn::Module {
 public:
  SparseGroupNormImpl(int groups, int channels);
  torch::Tensor forward(const torch::Tensor& x, const SparseLevel& level, int64_t batch);

 private:
  int groups_;
  torch::Tensor weight_, bias_;
};
TORCH_MODULE(SparseGroupNorm);

class SparseResBlockImpl : public torch::nn::Module {
 public:
  SparseResBlockImpl(int in, int out, int time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb, const SparseLevel& level, int64_t batch);

 private:
  SparseGroupNorm n1_{nullptr}, n2_{nullptr};
  SparseConv c1_{nullptr}, c2_{nullptr};
  torch::nn::Linear time_{nullptr}, skip_{nullptr};
};
TORCH_MODULE(SparseResBlock);

/// SDF denoiser on the sparse shell voxels.
class SparseUNet : public torch::nn::Module, public Denoiser {
 public:
  explicit SparseUNet(SparseUNetConfig config);

  torch::Tensor predict(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                        const Conditioning& cond, const Layout& layout) override;
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                        const SparseStructure& structure);

  const SparseUNetConfig& config() const { return config_; }

 private:
  SparseUNetConfig config_;
  TimeEmbedding time_{nullptr};
  SparseConv in_conv_{nullptr}, out_conv_{nullptr};
  SparseGroupNorm out_norm_{nullptr};
  std::vector<SparseResBlock> enc_, dec_, mid_;
  std::vector<SparseDown> down_;
  std::vector<SparseConv> up_;
};

}  // namespace lasdiff
