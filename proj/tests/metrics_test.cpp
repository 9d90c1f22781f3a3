#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lasdiff/error.hpp"
#include "lasdiff/metrics.hpp"

using namespace lasdiff;

namespace {

PointSet random_points(size_t n, uint64_t seed, Vec3 offset = {0, 0, 0}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  PointSet p(n);
  for (auto& v : p) v = Vec3{u(rng), u(rng), u(rng)} + offset;
  return p;
}

double brute_force_emd(const PointSet& p, const PointSet& q) {
  std::vector<int> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0;
    for (size_t i = 0; i < p.size(); ++i) s += norm(p[i] - q[perm[i]]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / p.size();
}

DenseField3D occupancy(int n, const std::vector<int>& on) {
  DenseField3D f(n, 0.0, FieldKind::occupancy);
  for (int i : on) f.mutable_values()[i] = 1;
  return f;
}

std::vector<std::vector<double>> gaussian_features(size_t n, const std::vector<double>& mu, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> out(n, std::vector<double>(mu.size()));
  for (auto& f : out)
    for (size_t d = 0; d < mu.size(); ++d) f[d] = mu[d] + g(rng);
  return out;
}

}  // namespace

TEST(ClipScore, SelfAndOrthogonal) {
  GrayImage a(8, 8, 255), b(8, 8, 0);
  ImageEmbedding model = [](const GrayImage& img) {
    return img.pixels[0] == 255 ? std::vector<double>{3, 0} : std::vector<double>{0, 2};
  };
  EXPECT_NEAR(clip_score(a, a, model), 100.0, 1e-4);
  EXPECT_NEAR(clip_score(a, b, model), 0.0, 1e-12);
}

TEST(SketchCd, HandExample) {
  EXPECT_DOUBLE_EQ(sketch_cd(std::vector<Vec2>{{0, 0}}, std::vector<Vec2>{{0.3, 0.4}}), 0.5);
}

TEST(SketchCd, IdenticalContainedAndEmpty) {
  GrayImage a(16, 16), b(16, 16);
  for (int x = 2; x < 10; ++x) a.at(x, 5) = 0;
  EXPECT_EQ(sketch_cd(a, a), 0.0);
  b = a;
  for (int x = 2; x < 10; ++x) b.at(x, 6) = 0;
  const auto pa = sketch_points(a), pb = sketch_points(b);
  // I -> G vanishes, so the total is the G -> I term alone
  double g_to_i = 0;
  for (auto g : pb) {
    double best = 1e9;
    for (auto i : pa) best = std::min(best, (g.x - i.x) * (g.x - i.x) + (g.y - i.y) * (g.y - i.y));
    g_to_i += best;
  }
  EXPECT_NEAR(sketch_cd(a, b), g_to_i / pb.size(), 1e-15);
  EXPECT_THROW(sketch_cd(a, GrayImage(16, 16)), Error);
}

TEST(Chamfer, TwoPointExample) {
  PointSet p{{0, 0, 0}, {1, 0, 0}}, q{{0.5, 0, 0}, {1.5, 0, 0}};
  EXPECT_DOUBLE_EQ(chamfer(p, q), 0.5);
  EXPECT_DOUBLE_EQ(emd(p, q).value, 0.5);
  EXPECT_EQ(chamfer(p, p), 0.0);
  EXPECT_EQ(emd(p, p).value, 0.0);
}

TEST(Chamfer, SymmetricNonNegative) {
  const auto p = random_points(100, 1), q = random_points(80, 2);
  EXPECT_DOUBLE_EQ(chamfer(p, q), chamfer(q, p));
  EXPECT_GT(chamfer(p, q), 0);
}

TEST(Emd, HungarianMatchesPermutationSearch) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_points(6, seed), q = random_points(6, seed + 100);
    EXPECT_NEAR(emd_exact(p, q), brute_force_emd(p, q), 1e-12);
    EXPECT_NEAR(emd_exact(p, q), emd_exact(q, p), 1e-12);
  }
}

TEST(Emd, AuctionWithinTwoPercentOfExact) {
  for (size_t n : {8u, 32u, 64u}) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const auto p = random_points(n, seed), q = random_points(n, seed + 7, {0.2, 0, 0});
      const double exact = emd_exact(p, q);
      EXPECT_LE(std::abs(emd_auction(p, q) - exact), 0.02 * exact) << n << " " << seed;
    }
  }
}

TEST(Emd, MethodTagAndSizeMismatch) {
  const auto small = emd(random_points(10, 1), random_points(10, 2));
  EXPECT_FALSE(small.approximate);
  const auto big = emd(random_points(300, 1), random_points(300, 2));
  EXPECT_TRUE(big.approximate);
  EXPECT_NE(small.method, big.method);
  EXPECT_THROW(emd(random_points(3, 1), random_points(4, 2)), Error);
}

TEST(VoxelIou, Identities) {
  EXPECT_EQ(voxel_iou(occupancy(2, {0, 3}), occupancy(2, {0, 3})), 1.0);
  EXPECT_EQ(voxel_iou(occupancy(2, {0, 3}), occupancy(2, {1, 2})), 0.0);
  EXPECT_DOUBLE_EQ(voxel_iou(occupancy(2, {0, 1, 2}), occupancy(2, {1, 2, 3})), 0.5);
  EXPECT_THROW(voxel_iou(occupancy(2, {}), occupancy(2, {})), Error);
  EXPECT_LE(voxel_iou(occupancy(2, {0, 1}), occupancy(2, {1, 2, 3})),
            voxel_iou(occupancy(2, {0, 1, 2}), occupancy(2, {1, 2, 3})));
}

TEST(Frechet, IdenticalSetsGiveZero) {
  const auto f = gaussian_features(200, {1, 2, 3}, 5);
  EXPECT_NEAR(frechet_distance(feature_stats(f), feature_stats(f)).value, 0.0, 1e-3);
}

TEST(Frechet, GaussianClosedForm) {
  const std::vector<double> mu1{0, 0, 0, 0}, mu2{1, -0.5, 0.5, 0};
  const double expected = 1 + 0.25 + 0.25;
  const auto g = feature_stats(gaussian_features(2000, mu1, 1));
  const auto r = feature_stats(gaussian_features(2000, mu2, 2));
  EXPECT_NEAR(frechet_distance(g, r).value, expected, 0.05 * expected);
  EXPECT_NEAR(frechet_distance(g, r).value, frechet_distance(r, g).value, 1e-6);
}

TEST(Frechet, DiagonalCovariancesClosedForm) {
  FeatureStats a, b;
  a.mean = Eigen::Vector2d(0, 0);
  b.mean = Eigen::Vector2d(1, 1);
  a.covariance = Eigen::Vector2d(4, 1).asDiagonal();
  b.covariance = Eigen::Vector2d(1, 9).asDiagonal();
  a.count = b.count = 10;
  // (2-1)^2 + (1-3)^2 for the commuting diagonal case
  EXPECT_NEAR(frechet_distance(a, b).value, 2 + 1 + 4, 1e-9);
}

TEST(Frechet, SingularCovarianceGetsRidge) {
  FeatureStats a;
  a.mean = Eigen::Vector3d::Zero();
  a.covariance = Eigen::Matrix3d::Zero();
  a.count = 2;
  const auto r = frechet_distance(a, a);
  EXPECT_TRUE(r.ridge_applied);
  EXPECT_NEAR(r.value, 0.0, 1e-6);
}

TEST(ShadingFid, SelfAndOrderInvariance) {
  std::vector<TriangleMesh> a{make_icosphere(0.5, 2), make_box({-0.4, -0.3, -0.2}, {0.4, 0.3, 0.2}),
                              make_torus(0.5, 0.15, 16, 8)};
  std::vector<TriangleMesh> b{make_icosphere(0.7, 2), make_box({-0.2, -0.5, -0.2}, {0.2, 0.5, 0.2}),
                              make_icosphere(0.3, 2)};
  const auto ex = conv_feature_stub();
  const auto self = shading_fid(a, a, ex);
  EXPECT_NEAR(self.value, 0.0, 1e-3);
  EXPECT_EQ(self.per_view.size(), 20u);
  EXPECT_EQ(self.extractor_id, ex.id);
  auto rev = a;
  std::reverse(rev.begin(), rev.end());
  EXPECT_NEAR(shading_fid(a, b, ex).value, shading_fid(rev, b, ex).value, 1e-6);
  EXPECT_GT(shading_fid(a, b, ex).value, 1e-3);
}

TEST(FidViews, UnitDirectionsDistinct) {
  const auto views = fid_views();
  ASSERT_EQ(views.size(), 20u);
  for (size_t i = 0; i < views.size(); ++i)
    for (size_t j = i + 1; j < views.size(); ++j) EXPECT_GT(norm(views[i].position() - views[j].position()), 1e-3);
}

TEST(Coverage, IdenticalSetsUpToPermutation) {
  std::vector<PointSet> ref;
  for (uint64_t s = 0; s < 5; ++s) ref.push_back(random_points(32, s, {3.0 * s, 0, 0}));
  auto gen = ref;
  std::reverse(gen.begin(), gen.end());
  for (auto m : {SetMetric::chamfer, SetMetric::emd}) {
    const auto r = cov_mmd_1nna(gen, ref, m);
    EXPECT_EQ(r.cov, 100.0);
    EXPECT_EQ(r.mmd, 0.0);
  }
}

TEST(Coverage, DuplicatedSingleGenCoversOne) {
  std::vector<PointSet> ref;
  for (uint64_t s = 0; s < 4; ++s) ref.push_back(random_points(16, s, {3.0 * s, 0, 0}));
  std::vector<PointSet> gen(3, ref[2]);
  EXPECT_DOUBLE_EQ(cov_mmd_1nna(gen, ref, SetMetric::chamfer).cov, 25.0);
}

TEST(Coverage, SeparatedClustersGiveFullNna) {
  std::vector<PointSet> gen, ref;
  for (uint64_t s = 0; s < 4; ++s) {
    gen.push_back(random_points(16, s, {0, 0, 0}));
    ref.push_back(random_points(16, s + 50, {10, 0, 0}));
  }
  // brute force leave-one-out on the merged pool
  std::vector<PointSet> pool = gen;
  pool.insert(pool.end(), ref.begin(), ref.end());
  int correct = 0;
  for (size_t i = 0; i < pool.size(); ++i) {
    size_t best = i == 0 ? 1 : 0;
    for (size_t j = 0; j < pool.size(); ++j)
      if (j != i && chamfer(pool[i], pool[j]) < chamfer(pool[i], pool[best])) best = j;
    correct += (i < gen.size()) == (best < gen.size());
  }
  EXPECT_EQ(correct, 8);
  EXPECT_EQ(cov_mmd_1nna(gen, ref, SetMetric::chamfer).nna, 100.0);
}

TEST(Retrieval, SphereRanksFirst) {
  std::vector<TriangleMesh> train{make_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}), make_torus(0.5, 0.2, 24, 12),
                                  make_icosphere(0.5, 3)};
  const auto hits = nearest_retrieval(make_icosphere(0.5, 3), train, 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].index, 2u);
  EXPECT_NEAR(hits[0].distance, 0.0, 1e-12);
  EXPECT_LE(hits[1].distance, hits[2].distance);
  EXPECT_THROW(nearest_retrieval(train[0], train, 4), Error);
}
