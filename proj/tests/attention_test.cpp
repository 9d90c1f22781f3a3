#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lasdiff/attention.hpp"
#include "lasdiff/dense_unet.hpp"
#include "lasdiff/error.hpp"

using namespace lasdiff;

namespace {

const double kDiagonal = 224.0 * std::sqrt(2.0);

CrossAttentionConfig small_config(int r = 4) {
  CrossAttentionConfig c;
  c.width = 8;
  c.cond_dim = 16;
  c.heads = 2;
  c.level_resolution = r;
  return c;
}

torch::Tensor mask_from(const AttentionMask& m, bool null_open = false) {
  auto t = torch::zeros({1, m.rows, m.cols + 1}, torch::kBool);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) t[0][r][c] = m.at(r, c);
  if (null_open) t[0].select(1, m.cols).fill_(true);
  return t;
}

std::vector<ProjectedPoint> random_projections(int n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<ProjectedPoint> out(n);
  for (auto& p : out) {
    p.pixel = {u(rng), u(rng)};
    p.depth = 1;
    p.valid = true;
  }
  return out;
}

}  // namespace

TEST(Mask, MatchesBruteForceDiskTest) {
  std::mt19937_64 rng(1);
  const PatchLayout layout;
  auto pts = random_projections(1000, rng, -60, 284);
  pts[3].valid = false;
  for (double d : {10.0, kDefaultDDelta, 120.0}) {
    const auto m = build_attention_mask(pts, layout, d);
    ASSERT_EQ(m.rows, 1000);
    ASSERT_EQ(m.cols, 256);
    for (int r = 0; r < m.rows; ++r)
      for (int j = 0; j < 256; ++j) {
        const auto c = layout.center(j);
        const double dist = std::hypot(pts[r].pixel.x - c.x, pts[r].pixel.y - c.y);
        ASSERT_EQ(m.at(r, j), pts[r].valid && dist < d) << r << " " << j;
      }
  }
}

TEST(Mask, BatchMaskNullColumn) {
  Conditioning c;
  c.kind = CondKind::sketch;
  c.patches = torch::zeros({2, 256, 4});
  c.views = {2, 2};
  c.null_mask = torch::tensor({false, true});
  auto m = batch_attention_mask(c, AttentionMode::view_aware_local, 4, kDefaultDDelta);
  ASSERT_EQ(m.sizes(), (std::vector<int64_t>{2, 64, 257}));
  EXPECT_FALSE(m[0].select(1, 256).any().item<bool>());
  EXPECT_TRUE(m[1].select(1, 256).all().item<bool>());
  EXPECT_FALSE(m[1].narrow(1, 0, 256).any().item<bool>());
  EXPECT_TRUE(torch::equal(m[0].narrow(1, 0, 256), view_mask(2, 4, kDefaultDDelta)));
  auto agnostic = batch_attention_mask(c, AttentionMode::view_agnostic, 4, kDefaultDDelta);
  EXPECT_TRUE(agnostic[0].narrow(1, 0, 256).all().item<bool>());
}

TEST(Attention, EmptyRowsPassThrough) {
  LocalCrossAttention attn(small_config());
  auto v = torch::randn({1, 64, 8});
  auto p = torch::randn({1, 256, 16});
  auto mask = torch::zeros({1, 64, 257}, torch::kBool);
  mask[0].narrow(0, 0, 10).narrow(1, 0, 30).fill_(true);
  auto out = attn->forward(v, p, mask);
  EXPECT_TRUE(torch::equal(out[0].narrow(0, 10, 54), v[0].narrow(0, 10, 54)));
  EXPECT_FALSE(torch::equal(out[0].narrow(0, 0, 10), v[0].narrow(0, 0, 10)));
  EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
}

TEST(Attention, WeightsAreConvexOverOpenColumns) {
  LocalCrossAttention attn(small_config());
  auto v = torch::randn({2, 64, 8});
  auto p = torch::randn({2, 256, 16});
  auto mask = torch::rand({2, 64, 257}) < 0.3;
  mask[0][5].fill_(false);
  auto w = attn->weights(v, p, mask);
  ASSERT_EQ(w.sizes(), (std::vector<int64_t>{2, 2, 64, 257}));
  EXPECT_TRUE((w >= 0).all().item<bool>());
  EXPECT_EQ(w.masked_fill(mask.unsqueeze(1), 0).abs().max().item<float>(), 0.0f);
  auto sums = w.sum(-1);
  auto open = mask.any(-1).unsqueeze(1).expand_as(sums);
  EXPECT_TRUE(torch::allclose(sums.masked_select(open), torch::ones({open.sum().item<int64_t>()}), 1e-5, 1e-6));
  EXPECT_EQ(sums.masked_select(open.logical_not()).abs().max().item<float>(), 0.0f);
}

TEST(Attention, SingleOpenPatchTakesFullWeight) {
  LocalCrossAttention attn(small_config());
  auto v = torch::randn({1, 64, 8});
  auto p = torch::randn({1, 256, 16});
  auto mask = torch::zeros({1, 64, 257}, torch::kBool);
  mask[0][7][100] = true;
  auto w = attn->weights(v, p, mask);
  EXPECT_FLOAT_EQ(w[0][0][7][100].item<float>(), 1.0f);
  EXPECT_FLOAT_EQ(w[0][1][7][100].item<float>(), 1.0f);
}

TEST(Attention, MaskedPatchPerturbationIsInvisible) {
  LocalCrossAttention attn(small_config());
  auto v = torch::randn({1, 64, 8});
  auto p = torch::randn({1, 256, 16});
  auto mask = torch::rand({1, 64, 257}) < 0.5;
  mask[0].narrow(1, 200, 56).fill_(false);
  auto q = p.clone();
  q[0].narrow(0, 200, 56).add_(torch::randn({56, 16}) * 10);
  EXPECT_TRUE(torch::equal(attn->forward(v, p, mask), attn->forward(v, q, mask)));
}

TEST(Attention, DiagonalRadiusEqualsViewAgnosticForInImageProjections) {
  const PatchLayout layout;
  std::mt19937_64 rng(4);
  const auto pts = random_projections(64, rng, 0, 224);
  const auto local = build_attention_mask(pts, layout, kDiagonal);
  const auto full = full_attention_mask(64, 256);
  EXPECT_EQ(local.bits, full.bits);
  LocalCrossAttention attn(small_config());
  auto v = torch::randn({1, 64, 8});
  auto p = torch::randn({1, 256, 16});
  EXPECT_TRUE(torch::equal(attn->forward(v, p, mask_from(local)), attn->forward(v, p, mask_from(full))));
}

// Off-image voxel projections reach further than the diagonal at the coarse
// levels, so the network-level check uses a radius past every projection.
TEST(Attention, CoveringRadiusMatchesViewAgnosticNetwork) {
  DenseUNetConfig cfg;
  cfg.levels = {{8, 8}, {4, 16}};
  cfg.attention_levels = {8, 4};
  cfg.bottleneck_blocks = 1;
  cfg.time_dim = 16;
  cfg.cond = CondKind::sketch;
  cfg.cond_dim = 16;
  cfg.heads = 2;
  double reach = 0;
  for (int r : {8, 4})
    for (const auto& view : predefined_views())
      for (const auto& pp : project_voxel_centers(r, view))
        for (int j : {0, 15, 240, 255}) {
          const auto c = PatchLayout{}.center(j);
          reach = std::max(reach, std::hypot(pp.pixel.x - c.x, pp.pixel.y - c.y));
        }
  EXPECT_GT(reach, kDiagonal);  // the geometry the comment above refers to
  cfg.d_delta = reach + 1;
  DenseUNet local(cfg);
  cfg.mode = AttentionMode::view_agnostic;
  DenseUNet agnostic(cfg);
  torch::NoGradGuard ng;
  Conditioning c;
  c.kind = CondKind::sketch;
  c.patches = torch::randn({2, 256, 16});
  c.global = torch::randn({2, 16});
  c.views = {0, 3};
  auto x = torch::randn({2, 1, 8, 8, 8});
  auto sc = torch::rand({2, 1, 8, 8, 8});
  auto t = torch::tensor({0.2f, 0.7f});
  EXPECT_TRUE(torch::equal(local.forward(x, sc, t, c), agnostic.forward(x, sc, t, c)));
}

TEST(Attention, RejectsMismatchedShapes) {
  LocalCrossAttention attn(small_config());
  EXPECT_THROW(attn->forward(torch::randn({1, 64, 8}), torch::randn({1, 256, 16}),
                             torch::zeros({1, 64, 256}, torch::kBool)),
               Error);
  EXPECT_THROW(LocalCrossAttention(CrossAttentionConfig{.width = 10, .cond_dim = 16, .heads = 4}), Error);
}
