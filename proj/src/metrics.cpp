#include "lasdiff/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "lasdiff/error.hpp"
#include "lasdiff/render.hpp"

namespace lasdiff {

double clip_score(const GrayImage& a, const GrayImage& b, const ImageEmbedding& model) {
  const auto ea = model(a), eb = model(b);
  if (ea.size() != eb.size() || ea.empty()) throw Error("embedding-mismatch");
  double na = 0, nb = 0, ab = 0;
  for (size_t i = 0; i < ea.size(); ++i) {
    na += ea[i] * ea[i];
    nb += eb[i] * eb[i];
    ab += ea[i] * eb[i];
  }
  if (na == 0 || nb == 0) throw Error("embedding-mismatch", "zero embedding");
  return 100.0 * ab / std::sqrt(na * nb);
}

std::vector<Vec2> sketch_points(const GrayImage& sketch) {
  std::vector<Vec2> pts;
  for (int y = 0; y < sketch.height; ++y) {
    for (int x = 0; x < sketch.width; ++x) {
      if (sketch.at(x, y) < 255) pts.push_back({(x + 0.5) / sketch.width, (y + 0.5) / sketch.height});
    }
  }
  return pts;
}

namespace {

template <typename P>
double mean_min_sq(const std::vector<P>& from, const std::vector<P>& to) {
  double total = 0;
  for (const auto& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : to) {
      double d2;
      if constexpr (std::is_same_v<P, Vec2>) {
        d2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
      } else {
        d2 = dot(a - b, a - b);
      }
      best = std::min(best, d2);
    }
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double sketch_cd(const std::vector<Vec2>& input, const std::vector<Vec2>& generated) {
  if (input.empty() || generated.empty()) throw Error("empty-sketch");
  return mean_min_sq(input, generated) + mean_min_sq(generated, input);
}

double sketch_cd(const GrayImage& input, const GrayImage& generated) {
  if (input.width != generated.width || input.height != generated.height) {
    throw Error("image-size-mismatch");
  }
  return sketch_cd(sketch_points(input), sketch_points(generated));
}

double chamfer(const PointSet& p, const PointSet& q) {
  if (p.empty() || q.empty()) throw Error("empty-point-set");
  return mean_min_sq(p, q) + mean_min_sq(q, p);
}

double voxel_iou(const DenseField3D& a, const DenseField3D& b) {
  if (a.resolution() != b.resolution()) throw Error("resolution-mismatch");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values()[i] > 0.5, y = b.values()[i] > 0.5;
    inter += x && y;
    uni += x || y;
  }
  if (uni == 0) throw Error("empty-union");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

PointSet sample_surface_points(const TriangleMesh& mesh, size_t count, uint64_t seed) {
  if (mesh.triangles.empty()) throw Error("empty-mesh");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += 0.5 * norm(cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]], mesh.vertices[tri[2]] - mesh.vertices[tri[0]]));
    cumulative[t] = total;
  }
  if (!(total > 0)) throw Error("degenerate-extent", "mesh has zero area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointSet pts;
  pts.reserve(count);
  for (size_t s = 0; s < count; ++s) {
    const double pick = unit(rng) * total;
    size_t t = std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin();
    t = std::min(t, cumulative.size() - 1);
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    pts.push_back(mesh.vertices[tri[0]] * (1 - r1) + mesh.vertices[tri[1]] * (r1 * (1 - r2)) +
                  mesh.vertices[tri[2]] * (r1 * r2));
  }
  return pts;
}

FeatureStats feature_stats(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw Error("insufficient-samples", "need at least two feature vectors");
  const size_t d = features.front().size();
  FeatureStats s;
  s.count = features.size();
  s.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& f : features) {
    if (f.size() != d) throw Error("dimension-mismatch");
    s.mean += Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(d));
  }
  s.mean /= static_cast<double>(s.count);
  s.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& f : features) {
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(d)) - s.mean;
    s.covariance.noalias() += c * c.transpose();
  }
  s.covariance /= static_cast<double>(s.count - 1);
  return s;
}

namespace {

bool ill_conditioned(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  return hi <= 0 || lo <= 1e-12 * hi;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FrechetResult frechet_distance(const FeatureStats& g, const FeatureStats& r) {
  if (g.mean.size() != r.mean.size()) throw Error("dimension-mismatch");
  FrechetResult out;
  Eigen::MatrixXd sg = 0.5 * (g.covariance + g.covariance.transpose());
  Eigen::MatrixXd sr = 0.5 * (r.covariance + r.covariance.transpose());
  if (ill_conditioned(sg) || ill_conditioned(sr)) {
    const auto eye = Eigen::MatrixXd::Identity(sg.rows(), sg.cols());
    sg += 1e-6 * eye;
    sr += 1e-6 * eye;
    out.ridge_applied = true;
  }
  const Eigen::MatrixXd root_r = psd_sqrt(sr);
  Eigen::MatrixXd inner = root_r * sg * root_r;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double trace_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  out.value = (g.mean - r.mean).squaredNorm() + sg.trace() + sr.trace() - 2.0 * trace_sqrt;
  return out;
}

FeatureExtractor conv_feature_stub(int channels, uint64_t seed) {
  constexpr int kPool = 4, kTaps = 5;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> weights(static_cast<size_t>(channels) * kTaps * kTaps);
  std::vector<double> bias(channels);
  for (auto& w : weights) w = normal(rng) / kTaps;
  for (auto& b : bias) b = 0.1 * normal(rng);
  FeatureExtractor fx;
  fx.id = "conv-stub-c" + std::to_string(channels) + "-seed" + std::to_string(seed);
  fx.extract = [weights, bias, channels](const GrayImage& image) {
    const int w = image.width / kPool, h = image.height / kPool;
    std::vector<double> pooled(static_cast<size_t>(w) * h, 0.0);
    for (int y = 0; y < h * kPool; ++y) {
      for (int x = 0; x < w * kPool; ++x) {
        pooled[static_cast<size_t>(y / kPool) * w + x / kPool] += image.at(x, y) / (255.0 * kPool * kPool);
      }
    }
    std::vector<double> feat(channels, 0.0);
    const int r = kTaps / 2;
    for (int c = 0; c < channels; ++c) {
      double acc_total = 0;
      for (int y = r; y < h - r; ++y) {
        for (int x = r; x < w - r; ++x) {
          double acc = bias[c];
          for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
              acc += weights[(static_cast<size_t>(c) * kTaps + dy + r) * kTaps + dx + r] *
                     pooled[static_cast<size_t>(y + dy) * w + x + dx];
            }
          }
          acc_total += std::max(0.0, acc);
        }
      }
      feat[c] = acc_total / std::max(1, (h - 2 * r) * (w - 2 * r));
    }
    return feat;
  };
  return fx;
}

std::vector<CameraView> fid_views(int count) {
  std::vector<CameraView> views;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;
    const double theta = golden * i;
    CameraView v;
    v.name = "fid" + std::to_string(i);
    v.elevation = std::asin(y) * 180.0 / std::numbers::pi;
    v.azimuth = std::remainder(theta * 180.0 / std::numbers::pi, 360.0);
    views.push_back(v);
  }
  return views;
}

FidReport fid_from_features(const std::vector<std::vector<std::vector<double>>>& gen_per_view,
                            const std::vector<std::vector<std::vector<double>>>& ref_per_view) {
  if (gen_per_view.size() != ref_per_view.size() || gen_per_view.empty()) throw Error("view-count-mismatch");
  FidReport report;
  for (size_t v = 0; v < gen_per_view.size(); ++v) {
    const auto result = frechet_distance(feature_stats(gen_per_view[v]), feature_stats(ref_per_view[v]));
    if (result.ridge_applied) report.warnings.push_back("view " + std::to_string(v) + ": ridge 1e-6 applied");
    report.per_view.push_back(result.value);
  }
  report.value = std::accumulate(report.per_view.begin(), report.per_view.end(), 0.0) /
                 static_cast<double>(report.per_view.size());
  return report;
}

FidReport shading_fid(const std::vector<TriangleMesh>& gen, const std::vector<TriangleMesh>& ref,
                      const FeatureExtractor& extractor) {
  if (gen.size() < 2 || ref.size() < 2) throw Error("insufficient-samples", "need at least two meshes per side");
  const auto views = fid_views();
  auto features = [&](const std::vector<TriangleMesh>& meshes) {
    std::vector<std::vector<std::vector<double>>> per_view(views.size());
    for (size_t v = 0; v < views.size(); ++v) {
      for (const auto& m : meshes) {
        per_view[v].push_back(extractor.extract(render_scene(std::span<const TriangleMesh>(&m, 1), views[v])));
      }
    }
    return per_view;
  };
  FidReport report = fid_from_features(features(gen), features(ref));
  report.extractor_id = extractor.id;
  return report;
}

double set_distance(const PointSet& a, const PointSet& b, SetMetric metric) {
  return metric == SetMetric::chamfer ? chamfer(a, b) : emd(a, b).value;
}

CoverageReport cov_mmd_1nna(const std::vector<PointSet>& gen, const std::vector<PointSet>& ref, SetMetric metric) {
  if (gen.empty() || ref.empty()) throw Error("empty-sides");
  const size_t ng = gen.size(), nr = ref.size(), n = ng + nr;
  auto item = [&](size_t i) -> const PointSet& { return i < ng ? gen[i] : ref[i - ng]; };
  std::vector<double> d(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) d[i * n + j] = d[j * n + i] = set_distance(item(i), item(j), metric);
  }
  CoverageReport out;
  std::vector<char> covered(nr, 0);
  for (size_t g = 0; g < ng; ++g) {
    size_t best = 0;
    for (size_t r = 1; r < nr; ++r) {
      if (d[g * n + ng + r] < d[g * n + ng + best]) best = r;
    }
    covered[best] = 1;
  }
  out.cov = 100.0 * static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / static_cast<double>(nr);
  double mmd = 0;
  for (size_t r = 0; r < nr; ++r) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t g = 0; g < ng; ++g) best = std::min(best, d[(ng + r) * n + g]);
    mmd += best;
  }
  out.mmd = mmd / static_cast<double>(nr);
  size_t correct = 0;
  for (size_t i = 0; i < n; ++i) {
    size_t best = i == 0 ? 1 : 0;
    for (size_t j = 0; j < n; ++j) {
      if (j != i && d[i * n + j] < d[i * n + best]) best = j;
    }
    correct += (best < ng) == (i < ng);
  }
  out.nna = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

std::vector<RetrievalHit> nearest_retrieval(const TriangleMesh& query, const std::vector<TriangleMesh>& train,
                                            size_t k, size_t samples, uint64_t seed) {
  if (k > train.size()) throw Error("invalid-k", "k exceeds the training set size");
  const auto q = sample_surface_points(query, samples, seed);
  std::vector<RetrievalHit> hits;
  for (size_t i = 0; i < train.size(); ++i) {
    hits.push_back({i, chamfer(q, sample_surface_points(train[i], samples, seed))});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.distance < b.distance; });
  hits.resize(k);
  return hits;
}

}  // namespace lasdiff
