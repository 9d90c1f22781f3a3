#include "lasdiff/sparse_unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lasdiff/error.hpp"
#include "lasdiff/nn.hpp"

namespace lasdiff {

void SparseUNetConfig::validate() const {
  if (levels.empty()) throw Error("invalid-config", "sparse U-Net needs at least one level");
  for (size_t l = 0; l < levels.size(); ++l) {
    if (levels[l].first < 1 || levels[l].second < 1) throw Error("invalid-config", "non-positive level");
    if (l > 0 && levels[l].first * 2 != levels[l - 1].first)
      throw Error("invalid-config", "sparse resolutions must halve per level");
  }
  if (in_channels != 2) throw Error("invalid-config", "sparse U-Net takes x_t and the self-conditioning channel");
  if (time_dim < 2 || time_dim % 2) throw Error("invalid-config", "time_dim must be even");
}

void to_json(nlohmann::json& j, const SparseUNetConfig& c) {
  j = nlohmann::json{{"levels", c.levels},
                     {"in_channels", c.in_channels},
                     {"bottleneck_blocks", c.bottleneck_blocks},
                     {"time_dim", c.time_dim},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SparseUNetConfig& c) {
  SparseUNetConfig d;
  c.levels = j.value("levels", d.levels);
  c.in_channels = j.value("in_channels", d.in_channels);
  c.bottleneck_blocks = j.value("bottleneck_blocks", d.bottleneck_blocks);
  c.time_dim = j.value("time_dim", d.time_dim);
  c.seed = j.value("seed", d.seed);
}

namespace {

struct Lookup {
  int64_t batch, res;
  std::vector<int32_t> table;
  Lookup(int64_t b, int64_t r) : batch(b), res(r), table(static_cast<size_t>(b * r * r * r), -1) {}
  int64_t key(int64_t s, int64_t i, int64_t j, int64_t k) const { return ((s * res + i) * res + j) * res + k; }
  int32_t find(int64_t s, int64_t i, int64_t j, int64_t k) const {
    if (i < 0 || j < 0 || k < 0 || i >= res || j >= res || k >= res) return -1;
    return table[key(s, i, j, k)];
  }
};

SparseLevel make_level(int resolution, int64_t batch, const std::vector<std::array<int64_t, 4>>& rows, Lookup& lookup) {
  SparseLevel lv;
  lv.resolution = resolution;
  lv.rows = static_cast<int64_t>(rows.size());
  std::vector<int64_t> coords(rows.size() * 4), nb(rows.size() * 27), counts(batch, 0);
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto& c = rows[r];
    std::copy(c.begin(), c.end(), coords.begin() + 4 * r);
    lookup.table[lookup.key(c[0], c[1], c[2], c[3])] = static_cast<int32_t>(r);
    ++counts[c[0]];
  }
  for (size_t r = 0; r < rows.size(); ++r) {
    const auto& c = rows[r];
    int o = 0;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk, ++o) {
          const int32_t f = lookup.find(c[0], c[1] + di, c[2] + dj, c[3] + dk);
          nb[r * 27 + o] = f < 0 ? lv.rows : f;
        }
  }
  const auto n = static_cast<int64_t>(rows.size());
  lv.coords = torch::tensor(coords, torch::kLong).view({n, 4});
  lv.batch = lv.coords.select(1, 0).contiguous();
  lv.neighbors = torch::tensor(nb, torch::kLong).view({n, 27});
  lv.taps = lv.neighbors.t().contiguous();
  lv.mirrored_taps = lv.neighbors.flip(1).t().contiguous();
  lv.counts = torch::tensor(counts, torch::kLong);
  return lv;
}

template <typename T>
void gather_kernel(const T* x, int64_t rows, int64_t c, const int64_t* table, int64_t n, T* out) {
  const size_t bytes = sizeof(T) * c;
  for (int64_t e = 0; e < n; ++e, out += c) {
    const int64_t r = table[e];
    if (r < rows) std::memcpy(out, x + r * c, bytes);
    else std::memset(out, 0, bytes);
  }
}

// [M, C] rows picked by an [N, K] table (index M = zero row) -> [N, K * C].
torch::Tensor gather_rows(const torch::Tensor& x_in, const torch::Tensor& table) {
  auto x = x_in.contiguous();
  auto idx = table.contiguous();
  const int64_t c = x.size(1);
  auto out = torch::empty({table.size(0), table.size(1) * c}, x.options());
  if (x.scalar_type() == torch::kFloat32) {
    gather_kernel(x.data_ptr<float>(), x.size(0), c, idx.data_ptr<int64_t>(), idx.numel(), out.data_ptr<float>());
  } else if (x.scalar_type() == torch::kFloat64) {
    gather_kernel(x.data_ptr<double>(), x.size(0), c, idx.data_ptr<int64_t>(), idx.numel(), out.data_ptr<double>());
  } else {
    throw Error("unsupported-dtype", "sparse features must be float32 or float64");
  }
  return out;
}

// y = b + sum_o x[nb(., o)] W_o, one tap at a time so the gathered block
// stays small. The input gradient gathers dy over the mirrored table.
torch::Tensor tap_conv(const torch::Tensor& x, const torch::Tensor& weight, const torch::Tensor& taps,
                       const torch::Tensor& init) {
  const int64_t cin = x.size(1), k = taps.size(0), m = taps.size(1);
  auto out = init.defined() ? init.expand({m, weight.size(1)}).clone() : torch::zeros({m, weight.size(1)}, x.options());
  for (int64_t o = 0; o < k; ++o) {
    auto g = gather_rows(x, taps[o].view({m, 1}));
    out.addmm_(g, weight.narrow(0, o * cin, cin));
  }
  return out;
}

struct SparseConvFunction : public torch::autograd::Function<SparseConvFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x,
                               const torch::Tensor& weight, const torch::Tensor& bias, const torch::Tensor& taps,
                               const torch::Tensor& mirrored_taps) {
    ctx->save_for_backward({x, weight, taps, mirrored_taps});
    return tap_conv(x, weight, taps, bias);
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    auto saved = ctx->get_saved_variables();
    const auto& x = saved[0];
    const auto& weight = saved[1];
    const auto& taps = saved[2];
    auto dy = grads[0].contiguous();
    const int64_t cin = x.size(1), cout = weight.size(1), k = taps.size(0), m = taps.size(1);
    auto dw = torch::empty_like(weight);
    for (int64_t o = 0; o < k; ++o)
      dw.narrow(0, o * cin, cin).copy_(gather_rows(x, taps[o].view({m, 1})).t().mm(dy));
    auto db = dy.sum(0);
    auto wt = weight.view({k, cin, cout}).transpose(1, 2).reshape({k * cout, cin});
    auto dx = tap_conv(dy, wt, saved[3], torch::Tensor());
    return {dx, dw, db, torch::Tensor(), torch::Tensor()};
  }
};

struct SparseDownFunction : public torch::autograd::Function<SparseDownFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& fine,
                               const torch::Tensor& weight, const torch::Tensor& bias, const torch::Tensor& children,
                               const torch::Tensor& slot) {
    ctx->save_for_backward({fine, weight, children, slot});
    return torch::addmm(bias, gather_rows(fine, children), weight);
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    auto saved = ctx->get_saved_variables();
    const auto& fine = saved[0];
    const auto& weight = saved[1];
    auto dy = grads[0].contiguous();
    auto dw = gather_rows(fine, saved[2]).t().mm(dy);
    auto db = dy.sum(0);
    auto dg = dy.mm(weight.t()).reshape({-1, fine.size(1)});
    auto dx = gather_rows(dg, saved[3]);
    return {dx, dw, db, torch::Tensor(), torch::Tensor()};
  }
};

torch::Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return torch::empty(shape).uniform_(-bound, bound);
}

}  // namespace

std::shared_ptr<const SparseStructure> SparseStructure::build(const std::vector<const SparseVoxelGrid*>& grids,
                                                              int depth) {
  if (grids.empty()) throw Error("empty-batch");
  auto s = std::make_shared<SparseStructure>();
  s->batch = static_cast<int64_t>(grids.size());
  const int res = grids.front()->resolution;
  std::vector<std::array<int64_t, 4>> rows;
  for (size_t b = 0; b < grids.size(); ++b) {
    if (grids[b]->resolution != res) throw Error("resolution-mismatch", "sparse batch mixes resolutions");
    if (grids[b]->coords.empty()) throw Error("empty-shell", "sample " + std::to_string(b));
    for (const auto& c : grids[b]->coords) rows.push_back({static_cast<int64_t>(b), c[0], c[1], c[2]});
  }
  if (!std::is_sorted(rows.begin(), rows.end())) throw Error("unsorted-coords");
  Lookup fine(s->batch, res);
  s->levels.push_back(make_level(res, s->batch, rows, fine));
  for (int l = 1; l < depth; ++l) {
    const int r = res >> l;
    if (r < 1) throw Error("invalid-config", "too many sparse levels");
    std::vector<std::array<int64_t, 4>> parents;
    parents.reserve(rows.size() / 4 + 1);
    for (const auto& c : rows) parents.push_back({c[0], c[1] / 2, c[2] / 2, c[3] / 2});
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
    Lookup coarse(s->batch, r);
    auto lv = make_level(r, s->batch, parents, coarse);
    auto& child_level = s->levels.back();
    std::vector<int64_t> children(parents.size() * 8), parent_of(rows.size()), slot_of(rows.size());
    for (size_t p = 0; p < parents.size(); ++p) {
      const auto& c = parents[p];
      for (int slot = 0; slot < 8; ++slot) {
        const int32_t f = fine.find(c[0], 2 * c[1] + (slot >> 2), 2 * c[2] + ((slot >> 1) & 1), 2 * c[3] + (slot & 1));
        children[p * 8 + slot] = f < 0 ? child_level.rows : f;
      }
    }
    for (size_t q = 0; q < rows.size(); ++q) {
      const auto& c = rows[q];
      parent_of[q] = coarse.find(c[0], c[1] / 2, c[2] / 2, c[3] / 2);
      slot_of[q] = parent_of[q] * 8 + (c[1] & 1) * 4 + (c[2] & 1) * 2 + (c[3] & 1);
    }
    lv.children = torch::tensor(children, torch::kLong).view({static_cast<int64_t>(parents.size()), 8});
    child_level.parent = torch::tensor(parent_of, torch::kLong);
    child_level.slot = torch::tensor(slot_of, torch::kLong).view({-1, 1});
    s->levels.push_back(std::move(lv));
    rows = std::move(parents);
    fine = std::move(coarse);
  }
  return s;
}

Layout sparse_layout(std::shared_ptr<const SparseStructure> structure) {
  Layout l;
  l.batch = structure->batch;
  l.batch_index = structure->levels.front().batch;
  l.sparse = std::move(structure);
  return l;
}

SparseConvImpl::SparseConvImpl(int in, int out) : in_(in) {
  weight_ = register_parameter("weight", uniform_init({27 * in, out}, 27 * in));
  bias_ = register_parameter("bias", uniform_init({out}, 27 * in));
}

torch::Tensor SparseConvImpl::forward(const torch::Tensor& x, const SparseLevel& level) {
  if (x.size(1) != in_ || x.size(0) != level.rows) throw Error("shape-mismatch", "sparse conv input");
  return SparseConvFunction::apply(x, weight_, bias_, level.taps, level.mirrored_taps);
}

SparseDownImpl::SparseDownImpl(int in, int out) : in_(in) {
  weight_ = register_parameter("weight", uniform_init({8 * in, out}, 8 * in));
  bias_ = register_parameter("bias", uniform_init({out}, 8 * in));
}

torch::Tensor SparseDownImpl::forward(const torch::Tensor& fine, const SparseLevel& fine_level,
                                     const SparseLevel& coarse) {
  if (fine.size(1) != in_ || fine.size(0) != fine_level.rows) throw Error("shape-mismatch", "sparse down input");
  return SparseDownFunction::apply(fine, weight_, bias_, coarse.children, fine_level.slot);
}

SparseGroupNormImpl::SparseGroupNormImpl(int groups, int channels) : groups_(groups) {
  weight_ = register_parameter("weight", torch::ones({channels}));
  bias_ = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor SparseGroupNormImpl::forward(const torch::Tensor& x, const SparseLevel& level, int64_t batch) {
  const int64_t m = x.size(0), c = x.size(1), per = c / groups_;
  auto xg = x.view({m, groups_, per});
  auto n = (level.counts.to(x.scalar_type()) * per).clamp_min(1).unsqueeze(1);
  auto sums = torch::zeros({batch, groups_}, x.options()).index_add(0, level.batch, xg.sum(2));
  auto mean = sums / n;
  auto centered = xg - mean.index_select(0, level.batch).unsqueeze(2);
  auto sq = torch::zeros({batch, groups_}, x.options()).index_add(0, level.batch, centered.pow(2).sum(2));
  auto inv = torch::rsqrt(sq / n + 1e-5);
  auto y = (centered * inv.index_select(0, level.batch).unsqueeze(2)).view({m, c});
  return y * weight_ + bias_;
}

SparseResBlockImpl::SparseResBlockImpl(int in, int out, int time_dim) {
  n1_ = register_module("n1", SparseGroupNorm(group_count(in), in));
  c1_ = register_module("c1", SparseConv(in, out));
  time_ = register_module("time", torch::nn::Linear(time_dim, out));
  n2_ = register_module("n2", SparseGroupNorm(group_count(out), out));
  c2_ = register_module("c2", SparseConv(out, out));
  if (in != out) skip_ = register_module("skip", torch::nn::Linear(in, out));
}

torch::Tensor SparseResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb, const SparseLevel& level,
                                          int64_t batch) {
  auto h = c1_(torch::silu(n1_(x, level, batch)), level);
  h = h + time_(torch::silu(temb)).index_select(0, level.batch);
  h = c2_(torch::silu(n2_(h, level, batch)), level);
  return h + (skip_ ? skip_(x) : x);
}

SparseUNet::SparseUNet(SparseUNetConfig config) : config_(std::move(config)) {
  config_.validate();
  torch::manual_seed(config_.seed);
  const auto& lv = config_.levels;
  const int n = static_cast<int>(lv.size());
  const int td = config_.time_dim;
  time_ = register_module("time", TimeEmbedding(td));
  in_conv_ = register_module("in_conv", SparseConv(config_.in_channels, lv[0].second));
  for (int l = 0; l < n; ++l) {
    enc_.push_back(register_module("enc" + std::to_string(l), SparseResBlock(lv[l].second, lv[l].second, td)));
    if (l + 1 < n) down_.push_back(register_module("down" + std::to_string(l), SparseDown(lv[l].second, lv[l + 1].second)));
  }
  for (int b = 0; b < config_.bottleneck_blocks; ++b)
    mid_.push_back(register_module("mid" + std::to_string(b), SparseResBlock(lv[n - 1].second, lv[n - 1].second, td)));
  for (int l = 0; l < n; ++l) {
    dec_.push_back(register_module("dec" + std::to_string(l), SparseResBlock(2 * lv[l].second, lv[l].second, td)));
    if (l > 0) up_.push_back(register_module("up" + std::to_string(l), SparseConv(lv[l].second, lv[l - 1].second)));
  }
  out_norm_ = register_module("out_norm", SparseGroupNorm(group_count(lv[0].second), lv[0].second));
  out_conv_ = register_module("out_conv", SparseConv(lv[0].second, 1));
}

torch::Tensor SparseUNet::forward(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                                  const SparseStructure& s) {
  const int n = static_cast<int>(config_.levels.size());
  if (static_cast<int>(s.levels.size()) != n || s.levels[0].resolution != config_.resolution())
    throw Error("resolution-mismatch", "sparse structure does not match the U-Net levels");
  if (x_t.dim() != 1 || x_t.size(0) != s.levels[0].rows || !x_t.sizes().equals(self_cond.sizes()))
    throw Error("coord-mismatch", "x_t and self_cond must hold one value per sparse voxel");
  const int64_t b = s.batch;
  auto temb = time_(t.to(x_t.scalar_type()));
  auto h = in_conv_(torch::stack({x_t, self_cond}, 1), s.levels[0]);
  std::vector<torch::Tensor> skips;
  for (int l = 0; l < n; ++l) {
    h = enc_[l](h, temb, s.levels[l], b);
    skips.push_back(h);
    if (l + 1 < n) h = down_[l](h, s.levels[l], s.levels[l + 1]);
  }
  for (auto& m : mid_) h = m(h, temb, s.levels[n - 1], b);
  for (int l = n - 1; l >= 0; --l) {
    h = dec_[l](torch::cat({h, skips[l]}, 1), temb, s.levels[l], b);
    if (l > 0) h = up_[l - 1](h.index_select(0, s.levels[l - 1].parent), s.levels[l - 1]);
  }
  return out_conv_(torch::silu(out_norm_(h, s.levels[0], b)), s.levels[0]).view({-1});
}

torch::Tensor SparseUNet::predict(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                                  const Conditioning&, const Layout& layout) {
  if (!layout.sparse) throw Error("coord-mismatch", "sparse denoiser needs a sparse layout");
  return forward(x_t, self_cond, t, *layout.sparse);
}

}  // namespace lasdiff
