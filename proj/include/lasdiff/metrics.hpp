#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lasdiff/camera.hpp"
#include "lasdiff/fields.hpp"
#include "lasdiff/image.hpp"
#include "lasdiff/triangle_mesh.hpp"

namespace lasdiff {

using PointSet = std::vector<Vec3>;

/// Opaque image -> vector function; callers L2-normalize where required.
using ImageEmbedding = std::function<std::vector<double>(const GrayImage&)>;

/// 100 * <E_a, E_b> with both embeddings L2-normalized.
double clip_score(const GrayImage& sketch_in, const GrayImage& sketch_gen, const ImageEmbedding& model);

/// Non-white pixels as points in [0,1]^2 (pixel centers divided by size).
std::vector<Vec2> sketch_points(const GrayImage& sketch);

/// Mean-of-min squared distances I->G plus G->I. Throws Error("empty-sketch").
double sketch_cd(const std::vector<Vec2>& input, const std::vector<Vec2>& generated);
double sketch_cd(const GrayImage& input, const GrayImage& generated);

/// Symmetric sum of mean squared nearest-neighbour distances.
double chamfer(const PointSet& p, const PointSet& q);

struct EmdResult {
  double value = 0;
  bool approximate = false;
  std::string method;
};

/// Mean matched distance of a minimum-cost perfect matching. Exact
/// (Hungarian) up to `exact_limit` points, auction approximation above.
EmdResult emd(const PointSet& p, const PointSet& q, size_t exact_limit = 256);
double emd_exact(const PointSet& p, const PointSet& q);
double emd_auction(const PointSet& p, const PointSet& q);

/// Optimal assignment for a square cost matrix (row -> column), Hungarian method.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

/// |a and b| / |a or b|. Throws Error("empty-union").
double voxel_iou(const DenseField3D& a, const DenseField3D& b);

/// Area-weighted uniform samples on the mesh surface.
PointSet sample_surface_points(const TriangleMesh& mesh, size_t count, uint64_t seed);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  size_t count = 0;
};

FeatureStats feature_stats(const std::vector<std::vector<double>>& features);

struct FrechetResult {
  double value = 0;
  bool ridge_applied = false;
};

/// |mu_g - mu_r|^2 + Tr(S_g + S_r - 2 (S_r S_g)^{1/2}). The square-root trace
/// is taken from the eigenvalues of S_r^{1/2} S_g S_r^{1/2} with negative
/// eigenvalues clipped; a 1e-6 ridge is added to ill-conditioned covariances.
FrechetResult frechet_distance(const FeatureStats& g, const FeatureStats& r);

/// Image feature extractor used by the shading FID.
struct FeatureExtractor {
  std::string id;
  std::function<std::vector<double>(const GrayImage&)> extract;
};

/// Fixed-seed convolutional feature stub: 4x average pooling, a bank of
/// random 5x5 filters with ReLU, global average pooling.
FeatureExtractor conv_feature_stub(int channels = 16, uint64_t seed = 7);

/// 20 camera directions on a Fibonacci sphere.
std::vector<CameraView> fid_views(int count = 20);

struct FidReport {
  double value = 0;
  std::vector<double> per_view;
  std::string extractor_id;
  std::vector<std::string> warnings;
};

/// Per-view Frechet distance of shading-image features, averaged over views.
FidReport fid_from_features(const std::vector<std::vector<std::vector<double>>>& gen_per_view,
                            const std::vector<std::vector<std::vector<double>>>& ref_per_view);
FidReport shading_fid(const std::vector<TriangleMesh>& gen_meshes, const std::vector<TriangleMesh>& ref_meshes,
                      const FeatureExtractor& extractor);

enum class SetMetric { chamfer, emd };

struct CoverageReport {
  double cov = 0;   // percent of reference sets that are the nearest of some generated set
  double mmd = 0;   // mean over reference sets of the distance to the nearest generated set
  double nna = 0;   // leave-one-out 1-NN accuracy on the merged pool, percent
};

/// Ties resolve to the smaller index (generated sets precede reference sets
/// in the merged pool).
CoverageReport cov_mmd_1nna(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref, SetMetric metric);

double set_distance(const PointSet& a, const PointSet& b, SetMetric metric);

struct RetrievalHit {
  size_t index;
  double distance;
};

/// k training meshes closest to the query by chamfer on `samples` points.
std::vector<RetrievalHit> nearest_retrieval(const TriangleMesh& query, const std::vector<TriangleMesh>& train,
                                            size_t k, size_t samples = 2048, uint64_t seed = 0);

}  // namespace lasdiff
