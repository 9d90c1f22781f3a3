#include "lasdiff/attention.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "lasdiff/error.hpp"
#include "lasdiff/nn.hpp"

namespace lasdiff {

torch::Tensor view_mask(int view_index, int level_resolution, double d_delta, const PatchLayout& layout) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, double, int, int>, torch::Tensor> cache;
  const auto key = std::make_tuple(view_index, level_resolution, d_delta, layout.image_size, layout.patch_width);
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const auto views = predefined_views();
  if (view_index < 0 || view_index >= static_cast<int>(views.size())) throw Error("unknown-view");
  const auto mask = build_attention_mask(project_voxel_centers(level_resolution, views[view_index]), layout, d_delta);
  auto t = torch::from_blob(const_cast<uint8_t*>(mask.bits.data()), {mask.rows, mask.cols}, torch::kUInt8)
               .to(torch::kBool)
               .clone();
  cache.emplace(key, t);
  return t;
}

torch::Tensor batch_attention_mask(const Conditioning& cond, AttentionMode mode, int level_resolution,
                                   double d_delta, const PatchLayout& layout) {
  const int64_t b = cond.batch();
  const int64_t r = static_cast<int64_t>(level_resolution) * level_resolution * level_resolution;
  const int64_t p = layout.count();
  auto mask = torch::zeros({b, r, p + 1}, torch::kBool);
  for (int64_t s = 0; s < b; ++s) {
    if (cond.is_null(s)) {
      mask[s].select(1, p).fill_(true);
    } else if (mode == AttentionMode::view_agnostic) {
      mask[s].narrow(1, 0, p).fill_(true);
    } else {
      if (s >= static_cast<int64_t>(cond.views.size())) throw Error("missing-view", "sketch condition without view");
      mask[s].narrow(1, 0, p).copy_(view_mask(cond.views[s], level_resolution, d_delta, layout));
    }
  }
  return mask;
}

torch::Tensor voxel_position_features(int level_resolution, int frequencies) {
  auto idx = torch::arange(level_resolution, torch::kDouble);
  auto grid = torch::meshgrid({idx, idx, idx}, "ij");
  std::vector<torch::Tensor> parts;
  for (auto& g : grid) parts.push_back(sinusoidal_features(g.reshape({-1}), frequencies));
  return torch::cat(parts, 1).to(torch::kFloat32);
}

torch::Tensor patch_position_features(const PatchLayout& layout, int frequencies) {
  auto j = torch::arange(layout.count(), torch::kLong);
  auto row = (j / layout.per_side()).to(torch::kDouble), col = (j % layout.per_side()).to(torch::kDouble);
  return torch::cat({sinusoidal_features(row, frequencies), sinusoidal_features(col, frequencies)}, 1)
      .to(torch::kFloat32);
}

LocalCrossAttentionImpl::LocalCrossAttentionImpl(const CrossAttentionConfig& config) : config_(config) {
  if (config.width % config.heads != 0) throw Error("invalid-config", "attention width not divisible by heads");
  const int c = config.width, d = config.cond_dim, f = config.pe_frequencies;
  norm_ = register_module("norm", torch::nn::GroupNorm(group_count(c), c));
  voxel_pe_ = register_module("voxel_pe", torch::nn::Linear(6 * f, c));
  patch_pe_ = register_module("patch_pe", torch::nn::Linear(4 * f, d));
  wq_ = register_module("wq", torch::nn::Linear(c, c));
  wk_ = register_module("wk", torch::nn::Linear(d, c));
  wv_ = register_module("wv", torch::nn::Linear(d, c));
  null_token_ = register_parameter("null_token", torch::randn({d}) * 0.02);
  voxel_pos_ = register_buffer("voxel_pos", voxel_position_features(config.level_resolution, f));
  patch_pos_ = register_buffer("patch_pos", patch_position_features(config.layout, f));
}

torch::Tensor LocalCrossAttentionImpl::attend(const torch::Tensor& voxels, const torch::Tensor& patches,
                                              const torch::Tensor& mask, torch::Tensor* weights_out) {
  const int64_t b = voxels.size(0), r = voxels.size(1), c = voxels.size(2), p = patches.size(1);
  const int64_t h = config_.heads, dh = c / h;
  if (mask.size(0) != b || mask.size(1) != r || mask.size(2) != p + 1 || patches.size(0) != b)
    throw Error("shape-mismatch", "attention mask does not match features");
  auto normed = norm_(voxels.transpose(1, 2)).transpose(1, 2);
  auto q = wq_(normed + voxel_pe_(voxel_pos_.to(voxels.dtype())));
  auto kv_in = patches + patch_pe_(patch_pos_.to(patches.dtype()));
  auto null_in = null_token_.to(patches.dtype()).view({1, 1, -1}).expand({b, 1, patches.size(2)});
  kv_in = torch::cat({kv_in, null_in}, 1);
  auto k = wk_(kv_in), v = wv_(kv_in);
  q = q.view({b, r, h, dh}).transpose(1, 2);
  k = k.view({b, p + 1, h, dh}).transpose(1, 2);
  v = v.view({b, p + 1, h, dh}).transpose(1, 2);
  auto logits = torch::matmul(q, k.transpose(2, 3)) / std::sqrt(static_cast<double>(dh));
  auto open = mask.unsqueeze(1);
  auto any = mask.any(2).view({b, 1, r, 1});
  logits = logits.masked_fill(open.logical_not(), -std::numeric_limits<double>::infinity());
  logits = logits.masked_fill(any.logical_not(), 0.0);
  auto w = torch::softmax(logits, -1) * any.to(logits.dtype());
  if (weights_out) *weights_out = w;
  auto update = torch::matmul(w, v).transpose(1, 2).reshape({b, r, c});
  return voxels + update;
}

torch::Tensor LocalCrossAttentionImpl::forward(const torch::Tensor& voxels, const torch::Tensor& patches,
                                               const torch::Tensor& mask) {
  return attend(voxels, patches, mask, nullptr);
}

torch::Tensor LocalCrossAttentionImpl::weights(const torch::Tensor& voxels, const torch::Tensor& patches,
                                               const torch::Tensor& mask) {
  torch::Tensor w;
  attend(voxels, patches, mask, &w);
  return w;
}

}  // namespace lasdiff
