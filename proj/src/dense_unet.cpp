#include "lasdiff/dense_unet.hpp"

#include <algorithm>

#include "lasdiff/error.hpp"
#include "lasdiff/nn.hpp"

namespace lasdiff {

void DenseUNetConfig::validate() const {
  if (levels.empty()) throw Error("invalid-config", "dense U-Net needs at least one level");
  for (size_t l = 0; l < levels.size(); ++l) {
    if (levels[l].first < 1 || levels[l].second < 1) throw Error("invalid-config", "non-positive level");
    if (l > 0 && levels[l].first * 2 != levels[l - 1].first)
      throw Error("invalid-config", "dense resolutions must halve per level");
  }
  for (int a : attention_levels) {
    if (std::none_of(levels.begin(), levels.end(), [&](auto& lv) { return lv.first == a; }))
      throw Error("invalid-config", "attention level " + std::to_string(a) + " not in the U-Net");
  }
  if (in_channels != 2) throw Error("invalid-config", "dense U-Net takes x_t and the self-conditioning channel");
  if (time_dim < 2 || time_dim % 2) throw Error("invalid-config", "time_dim must be even");
  for (auto& lv : levels)
    if (lv.second % heads) throw Error("invalid-config", "widths must be divisible by the head count");
  if (d_delta <= 0) throw Error("invalid-config", "d_delta must be positive");
}

void to_json(nlohmann::json& j, const DenseUNetConfig& c) {
  j = nlohmann::json{{"levels", c.levels},
                     {"in_channels", c.in_channels},
                     {"bottleneck_blocks", c.bottleneck_blocks},
                     {"attention_levels", c.attention_levels},
                     {"time_dim", c.time_dim},
                     {"cond", to_string(c.cond)},
                     {"mode", to_string(c.mode)},
                     {"cond_dim", c.cond_dim},
                     {"heads", c.heads},
                     {"d_delta", c.d_delta},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DenseUNetConfig& c) {
  DenseUNetConfig d;
  c.levels = j.value("levels", d.levels);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.bottleneck_blocks = j.value("bottleneck_blocks", d.bottleneck_blocks);
  c.attention_levels = j.value("attention_levels", d.attention_levels);
  c.time_dim = j.value("time_dim", d.time_dim);
  c.cond = cond_kind_from_string(j.value("cond", to_string(d.cond)));
  c.mode = attention_mode_from_string(j.value("mode", to_string(d.mode)));
  c.cond_dim = j.value("cond_dim", d.cond_dim);
  c.heads = j.value("heads", d.heads);
  c.d_delta = j.value("d_delta", d.d_delta);
  c.seed = j.value("seed", d.seed);
}

namespace {

torch::nn::Conv3d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

DenseResBlockImpl::DenseResBlockImpl(int in, int out, int time_dim) {
  n1_ = register_module("n1", torch::nn::GroupNorm(group_count(in), in));
  c1_ = register_module("c1", conv3(in, out));
  time_ = register_module("time", torch::nn::Linear(time_dim, out));
  n2_ = register_module("n2", torch::nn::GroupNorm(group_count(out), out));
  c2_ = register_module("c2", conv3(out, out));
  if (in != out) skip_ = register_module("skip", torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 1)));
}

torch::Tensor DenseResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = c1_(torch::silu(n1_(x)));
  h = h + time_(torch::silu(temb)).view({h.size(0), h.size(1), 1, 1, 1});
  h = c2_(torch::silu(n2_(h)));
  return h + (skip_ ? skip_(x) : x);
}

GlobalModulationImpl::GlobalModulationImpl(int cond_dim, int width) {
  l1_ = register_module("l1", torch::nn::Linear(cond_dim, width));
  l2_ = register_module("l2", torch::nn::Linear(width, width));
}

torch::Tensor GlobalModulationImpl::forward(const torch::Tensor& h, const torch::Tensor& embedding) {
  auto scale = l2_(torch::silu(l1_(embedding)));
  return h * (1 + scale.view({h.size(0), h.size(1), 1, 1, 1}));
}

DenseUNet::DenseUNet(DenseUNetConfig config) : config_(std::move(config)) {
  config_.validate();
  torch::manual_seed(config_.seed);
  const auto& lv = config_.levels;
  const int n = static_cast<int>(lv.size());
  const int td = config_.time_dim;
  time_ = register_module("time", TimeEmbedding(td));
  in_conv_ = register_module("in_conv", conv3(config_.in_channels, lv[0].second));
  for (int l = 0; l < n; ++l) {
    enc_.push_back(register_module("enc" + std::to_string(l), DenseResBlock(lv[l].second, lv[l].second, td)));
    if (l + 1 < n)
      down_.push_back(register_module("down" + std::to_string(l), conv3(lv[l].second, lv[l + 1].second, 2)));
  }
  for (int b = 0; b < config_.bottleneck_blocks; ++b)
    mid_.push_back(register_module("mid" + std::to_string(b), DenseResBlock(lv[n - 1].second, lv[n - 1].second, td)));
  for (int l = 0; l < n; ++l) {
    dec_.push_back(register_module("dec" + std::to_string(l), DenseResBlock(2 * lv[l].second, lv[l].second, td)));
    if (l > 0) up_.push_back(register_module("up" + std::to_string(l), conv3(lv[l].second, lv[l - 1].second)));
  }
  out_norm_ = register_module("out_norm", torch::nn::GroupNorm(group_count(lv[0].second), lv[0].second));
  out_conv_ = register_module("out_conv", conv3(lv[0].second, 1));

  const bool attention = config_.cond == CondKind::sketch && config_.mode != AttentionMode::global;
  const bool modulation = config_.cond == CondKind::category ||
                          (config_.cond == CondKind::sketch && config_.mode == AttentionMode::global);
  for (int site = 0; site < 2 * n + 1; ++site) {
    const int level = site < n ? site : (site == n ? n - 1 : site - n - 1);
    const int width = lv[level].second;
    const bool at_mid = site == n;
    if (attention && uses_attention(lv[level].first) && (!at_mid || config_.bottleneck_blocks > 0)) {
      CrossAttentionConfig ac;
      ac.width = width;
      ac.cond_dim = config_.cond_dim;
      ac.heads = config_.heads;
      ac.level_resolution = lv[level].first;
      attn_.push_back(register_module("attn" + std::to_string(site), LocalCrossAttention(ac)));
    } else {
      attn_.push_back(LocalCrossAttention{nullptr});
    }
    if (modulation) {
      mod_.push_back(register_module("mod" + std::to_string(site), GlobalModulation(config_.cond_dim, width)));
    } else {
      mod_.push_back(GlobalModulation{nullptr});
    }
  }
  if (modulation)
    null_embedding_ = register_parameter("null_embedding", torch::randn({config_.cond_dim}) * 0.02);
}

bool DenseUNet::uses_attention(int level_resolution) const {
  const auto& a = config_.attention_levels;
  return std::find(a.begin(), a.end(), level_resolution) != a.end();
}

torch::Tensor DenseUNet::global_embedding(const Conditioning& cond, torch::Dtype dtype) const {
  auto null_e = null_embedding_.to(dtype).unsqueeze(0);
  if (cond.kind == CondKind::none || !cond.global.defined()) return null_e;
  auto g = cond.global.to(dtype);
  if (!cond.null_mask.defined()) return g;
  return torch::where(cond.null_mask.unsqueeze(1), null_e.expand_as(g), g);
}

torch::Tensor DenseUNet::condition(torch::Tensor h, size_t site, int level, const Conditioning& cond,
                                   const torch::Tensor& embedding, std::vector<torch::Tensor>& masks) {
  if (mod_[site]) {
    auto e = embedding.size(0) == h.size(0) ? embedding : embedding.expand({h.size(0), embedding.size(1)});
    h = mod_[site](h, e);
  }
  if (attn_[site]) {
    const int r = config_.levels[level].first;
    const int64_t b = h.size(0), c = h.size(1);
    const PatchLayout layout;
    Conditioning effective = cond;
    if (cond.kind == CondKind::none) {
      effective.kind = CondKind::sketch;
      effective.null_mask = torch::ones({b}, torch::kBool);
    }
    if (!masks[level].defined())
      masks[level] = batch_attention_mask(effective, config_.mode, r, config_.d_delta, layout);
    auto patches = effective.patches.defined()
                       ? effective.patches.to(h.scalar_type())
                       : torch::zeros({b, layout.count(), config_.cond_dim}, h.options());
    auto v = h.flatten(2).transpose(1, 2);
    v = attn_[site](v, patches, masks[level]);
    h = v.transpose(1, 2).reshape({b, c, r, r, r});
  }
  return h;
}

torch::Tensor DenseUNet::forward(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                                 const Conditioning& cond) {
  const int n = static_cast<int>(config_.levels.size());
  if (x_t.dim() != 5 || x_t.size(2) != config_.resolution() || !x_t.sizes().equals(self_cond.sizes()))
    throw Error("resolution-mismatch", "dense input must be [B,1," + std::to_string(config_.resolution()) + "^3]");
  if (cond.kind != CondKind::none && cond.kind != config_.cond)
    throw Error("condition-mismatch", "network trained for " + to_string(config_.cond));
  auto temb = time_(t.to(x_t.scalar_type()));
  torch::Tensor embedding;
  if (!mod_.empty() && mod_[0]) embedding = global_embedding(cond, x_t.scalar_type());
  std::vector<torch::Tensor> masks(n);

  auto h = in_conv_(torch::cat({x_t, self_cond}, 1));
  std::vector<torch::Tensor> skips;
  for (int l = 0; l < n; ++l) {
    h = enc_[l](h, temb);
    h = condition(h, l, l, cond, embedding, masks);
    skips.push_back(h);
    if (l + 1 < n) h = down_[l](h);
  }
  for (size_t b = 0; b < mid_.size(); ++b) {
    h = mid_[b](h, temb);
    if (b == 0) h = condition(h, n, n - 1, cond, embedding, masks);
  }
  for (int l = n - 1; l >= 0; --l) {
    h = dec_[l](torch::cat({h, skips[l]}, 1), temb);
    h = condition(h, n + 1 + l, l, cond, embedding, masks);
    if (l > 0) {
      h = torch::upsample_nearest3d(h, std::vector<int64_t>{2 * h.size(2), 2 * h.size(3), 2 * h.size(4)});
      h = up_[l - 1](h);
    }
  }
  return out_conv_(torch::silu(out_norm_(h)));
}

torch::Tensor DenseUNet::predict(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                                 const Conditioning& cond, const Layout&) {
  return forward(x_t, self_cond, t, cond);
}

}  // namespace lasdiff
