#include "lasdiff/triangle_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "lasdiff/error.hpp"

namespace lasdiff {

void TriangleMesh::validate() const {
  for (const auto& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
      throw Error("invalid-mesh", "non-finite vertex");
    }
  }
  for (const auto& t : triangles) {
    for (uint32_t idx : t) {
      if (idx >= vertices.size()) throw Error("invalid-mesh", "triangle index out of range");
    }
  }
}

bool TriangleMesh::is_watertight() const {
  if (triangles.empty()) return false;
  std::map<std::pair<uint32_t, uint32_t>, int> edge_count;
  for (const auto& t : triangles) {
    for (int e = 0; e < 3; ++e) {
      uint32_t a = t[e], b = t[(e + 1) % 3];
      edge_count[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  return std::all_of(edge_count.begin(), edge_count.end(),
                     [](const auto& kv) { return kv.second == 2; });
}

double TriangleMesh::signed_volume() const {
  double vol = 0;
  for (const auto& t : triangles) {
    vol += dot(vertices[t[0]], cross(vertices[t[1]], vertices[t[2]]));
  }
  return vol / 6.0;
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto base = static_cast<uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (auto t : other.triangles) {
    triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
}

std::pair<Vec3, Vec3> TriangleMesh::bounds() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec3 lo{inf, inf, inf}, hi{-inf, -inf, -inf};
  for (const auto& v : vertices) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v[a]);
      hi[a] = std::max(hi[a], v[a]);
    }
  }
  return {lo, hi};
}

TriangleMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : m.vertices) v = normalized(v);
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                 {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                 {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                 {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<uint32_t, uint32_t>, uint32_t> midpoint;
    auto mid = [&](uint32_t a, uint32_t b) {
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      m.vertices.push_back(normalized((m.vertices[a] + m.vertices[b]) * 0.5));
      auto idx = static_cast<uint32_t>(m.vertices.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<uint32_t, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (const auto& t : m.triangles) {
      uint32_t a = mid(t[0], t[1]), b = mid(t[1], t[2]), c = mid(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v = center + v * radius;
  if (m.signed_volume() < 0) {
    for (auto& t : m.triangles) std::swap(t[1], t[2]);
  }
  return m;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
  }
  // Two triangles per face, counter-clockwise seen from outside.
  m.triangles = {{0, 4, 6}, {0, 6, 2},   // -x
                 {1, 3, 7}, {1, 7, 5},   // +x
                 {0, 1, 5}, {0, 5, 4},   // -y
                 {2, 6, 7}, {2, 7, 3},   // +y
                 {0, 2, 3}, {0, 3, 1},   // -z
                 {4, 5, 7}, {4, 7, 6}};  // +z
  return m;
}

TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments,
                        int minor_segments, const Vec3& center) {
  TriangleMesh m;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < major_segments; ++i) {
    double u = two_pi * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      double v = two_pi * j / minor_segments;
      double r = major_radius + minor_radius * std::cos(v);
      m.vertices.push_back(center + Vec3{r * std::cos(u), minor_radius * std::sin(v), r * std::sin(u)});
    }
  }
  auto idx = [&](int i, int j) {
    return static_cast<uint32_t>((i % major_segments) * minor_segments + (j % minor_segments));
  };
  for (int i = 0; i < major_segments; ++i) {
    for (int j = 0; j < minor_segments; ++j) {
      uint32_t a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
      m.triangles.push_back({a, c, b});
      m.triangles.push_back({a, d, c});
    }
  }
  if (m.signed_volume() < 0) {
    for (auto& t : m.triangles) std::swap(t[1], t[2]);
  }
  return m;
}

}  // namespace lasdiff
