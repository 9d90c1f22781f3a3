#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lasdiff/fields.hpp"

namespace lasdiff {
namespace {

// Closest point on triangle (a, b, c) to p, Voronoi-region walk.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct Box {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void grow(const Vec3& p) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  void grow(const Box& b) { grow(b.lo); grow(b.hi); }

  double distance2(const Vec3& p) const {
    double d2 = 0;
    for (int a = 0; a < 3; ++a) {
      double d = std::max({lo[a] - p[a], 0.0, p[a] - hi[a]});
      d2 += d * d;
    }
    return d2;
  }

  bool hit_by_ray(const Vec3& origin, const Vec3& inv_dir) const {
    double tmin = 0, tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      double t0 = (lo[a] - origin[a]) * inv_dir[a];
      double t1 = (hi[a] - origin[a]) * inv_dir[a];
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
      if (tmin > tmax) return false;
    }
    return true;
  }
};

/// Bounding-volume hierarchy over the mesh triangles.
class TriangleTree {
 public:
  explicit TriangleTree(const TriangleMesh& mesh) : mesh_(mesh) {
    const size_t n = mesh.triangles.size();
    order_.resize(n);
    centroids_.resize(n);
    boxes_.resize(n);
    for (size_t t = 0; t < n; ++t) {
      order_[t] = static_cast<uint32_t>(t);
      const auto& tri = mesh.triangles[t];
      for (int v = 0; v < 3; ++v) boxes_[t].grow(mesh.vertices[tri[v]]);
      centroids_[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
    }
    nodes_.reserve(2 * n / kLeafSize + 2);
    build(0, n);
  }

  double unsigned_distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    nearest(0, p, best);
    return std::sqrt(best);
  }

  int count_hits(const Vec3& origin, const Vec3& dir) const {
    const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    int hits = 0;
    ray(0, origin, dir, inv, hits);
    return hits;
  }

 private:
  static constexpr size_t kLeafSize = 4;

  struct Node {
    Box box;
    int left = -1, right = -1;
    size_t begin = 0, end = 0;
  };

  int build(size_t begin, size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Box box, centroid_box;
    for (size_t i = begin; i < end; ++i) {
      box.grow(boxes_[order_[i]]);
      centroid_box.grow(centroids_[order_[i]]);
    }
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= kLeafSize) return id;
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
      if (centroid_box.hi[a] - centroid_box.lo[a] > centroid_box.hi[axis] - centroid_box.lo[axis]) axis = a;
    }
    const size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](uint32_t a, uint32_t b) { return centroids_[a][axis] < centroids_[b][axis]; });
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void nearest(int id, const Vec3& p, double& best) const {
    const Node& node = nodes_[id];
    if (node.box.distance2(p) >= best) return;
    if (node.left < 0) {
      for (size_t i = node.begin; i < node.end; ++i) {
        const auto& tri = mesh_.triangles[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]],
                                                 mesh_.vertices[tri[2]]);
        best = std::min(best, dot(p - q, p - q));
      }
      return;
    }
    const double dl = nodes_[node.left].box.distance2(p);
    const double dr = nodes_[node.right].box.distance2(p);
    if (dl < dr) {
      nearest(node.left, p, best);
      nearest(node.right, p, best);
    } else {
      nearest(node.right, p, best);
      nearest(node.left, p, best);
    }
  }

  void ray(int id, const Vec3& o, const Vec3& d, const Vec3& inv, int& hits) const {
    const Node& node = nodes_[id];
    if (!node.box.hit_by_ray(o, inv)) return;
    if (node.left < 0) {
      for (size_t i = node.begin; i < node.end; ++i) {
        const auto& tri = mesh_.triangles[order_[i]];
        if (ray_hits_triangle(o, d, mesh_.vertices[tri[0]], mesh_.vertices[tri[1]], mesh_.vertices[tri[2]])) {
          ++hits;
        }
      }
      return;
    }
    ray(node.left, o, d, inv, hits);
    ray(node.right, o, d, inv, hits);
  }

  // Moller-Trumbore, both faces, strictly positive ray parameter.
  static bool ray_hits_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 e1 = b - a, e2 = c - a;
    const Vec3 pv = cross(d, e2);
    const double det = dot(e1, pv);
    if (std::abs(det) < 1e-14) return false;
    const double inv_det = 1.0 / det;
    const Vec3 tv = o - a;
    const double u = dot(tv, pv) * inv_det;
    if (u < 0 || u > 1) return false;
    const Vec3 qv = cross(tv, e1);
    const double v = dot(d, qv) * inv_det;
    if (v < 0 || u + v > 1) return false;
    return dot(e2, qv) * inv_det > 1e-12;
  }

  const TriangleMesh& mesh_;
  std::vector<uint32_t> order_;
  std::vector<Vec3> centroids_;
  std::vector<Box> boxes_;
  std::vector<Node> nodes_;
};

// 13 fixed directions on a slightly rotated Fibonacci sphere, kept away from
// the coordinate axes so grid-aligned geometry does not produce grazing hits.
std::vector<Vec3> parity_directions() {
  std::vector<Vec3> dirs;
  constexpr int kCount = 13;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kCount; ++i) {
    double y = 1.0 - 2.0 * (i + 0.5) / kCount;
    double r = std::sqrt(1.0 - y * y);
    double theta = golden * i + 0.3141;
    dirs.push_back(normalized(Vec3{r * std::cos(theta) + 0.0123, y + 0.0071, r * std::sin(theta) + 0.0097}));
  }
  return dirs;
}

}  // namespace

DenseField3D mesh_to_sdf(const TriangleMesh& mesh, int resolution) {
  if (mesh.triangles.empty()) throw Error("empty-mesh");
  mesh.validate();
  if (!mesh.is_watertight()) throw Error("open-surface", "every edge must be shared by two triangles");
  const TriangleTree tree(mesh);
  static const std::vector<Vec3> dirs = parity_directions();
  DenseField3D field(resolution, 0.0, FieldKind::sdf);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      for (int k = 0; k < resolution; ++k) {
        const Vec3 p = field.cell_center(i, j, k);
        const double dist = tree.unsigned_distance(p);
        int inside_votes = 0;
        if (dist > 0) {
          for (const auto& d : dirs) inside_votes += tree.count_hits(p, d) % 2;
        }
        const bool inside = 2 * inside_votes > static_cast<int>(dirs.size());
        field.at(i, j, k) = std::min(dist, kMaxDomainDistance) * (inside ? -1.0 : 1.0);
      }
    }
  }
  return field;
}

}  // namespace lasdiff
