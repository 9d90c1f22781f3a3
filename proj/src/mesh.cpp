#include "lasdiff/mesh.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <queue>
#include <sstream>

namespace lasdiff {

CompletedField complete_field(const SparseVoxelGrid& sparse, double band) {
  const int n = sparse.resolution;
  CompletedField out{DenseField3D(n, band, FieldKind::sdf), false};
  if (sparse.coords.empty()) return out;

  // 0 = unvisited free cell, 1 = sparse cell, 2 = exterior
  std::vector<uint8_t> state(out.field.size(), 0);
  for (size_t s = 0; s < sparse.coords.size(); ++s) {
    const auto& c = sparse.coords[s];
    const size_t idx = out.field.index(c[0], c[1], c[2]);
    state[idx] = 1;
    out.field.mutable_values()[idx] = sparse.values[s];
  }

  std::queue<Int3> frontier;
  auto seed = [&](int i, int j, int k) {
    const size_t idx = out.field.index(i, j, k);
    if (state[idx] == 0) {
      state[idx] = 2;
      frontier.push({i, j, k});
    }
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      seed(0, i, j); seed(n - 1, i, j);
      seed(i, 0, j); seed(i, n - 1, j);
      seed(i, j, 0); seed(i, j, n - 1);
    }
  }
  constexpr std::array<Int3, 6> kSteps{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  size_t sign_conflicts = 0;
  while (!frontier.empty()) {
    const Int3 c = frontier.front();
    frontier.pop();
    for (const auto& s : kSteps) {
      const int a = c[0] + s[0], b = c[1] + s[1], d = c[2] + s[2];
      if (a < 0 || b < 0 || d < 0 || a >= n || b >= n || d >= n) continue;
      const size_t idx = out.field.index(a, b, d);
      if (state[idx] == 0) {
        state[idx] = 2;
        frontier.push({a, b, d});
      } else if (state[idx] == 1 && out.field.values()[idx] < 0) {
        ++sign_conflicts;
      }
    }
  }
  auto& values = out.field.mutable_values();
  for (size_t idx = 0; idx < state.size(); ++idx) {
    if (state[idx] == 0) {
      values[idx] = -band;
    }
  }
  out.leaky_shell = sign_conflicts > 0;
  return out;
}

CompletedField complete_field(const SparseVoxelGrid& sparse) {
  return complete_field(sparse, SdfNormalization::for_resolution(sparse.resolution).band);
}

namespace {

constexpr Int3 corner_offset(int c) { return {c & 1, (c >> 1) & 1, (c >> 2) & 1}; }

struct CubeTables {
  std::array<std::array<int, 2>, 12> edge_corners{};
  std::array<int, 12> edge_axis{};
  // Per configuration: flat list of edge triples (negative corners = set bits).
  std::array<std::vector<int>, 256> triangles;
};

int find_edge(const CubeTables& t, int a, int b) {
  for (int e = 0; e < 12; ++e) {
    if ((t.edge_corners[e][0] == a && t.edge_corners[e][1] == b) ||
        (t.edge_corners[e][0] == b && t.edge_corners[e][1] == a)) {
      return e;
    }
  }
  return -1;
}

// Builds the 256-case triangulation from face walks: on each face, every
// maximal run of negative corners is cut off by one segment, which makes
// ambiguous faces resolve identically from both adjacent cubes.
CubeTables build_tables() {
  CubeTables t;
  int e = 0;
  for (int c = 0; c < 8; ++c) {
    for (int axis = 0; axis < 3; ++axis) {
      if (c & (1 << axis)) continue;
      t.edge_corners[e] = {c, c | (1 << axis)};
      t.edge_axis[e] = axis;
      ++e;
    }
  }

  // Faces with corners counter-clockwise seen from outside.
  std::array<std::array<int, 4>, 6> faces{};
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      std::array<int, 4> corners{};
      int m = 0;
      for (int c = 0; c < 8; ++c) {
        if (((c >> axis) & 1) == side) corners[m++] = c;
      }
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      auto angle = [&](int c) {
        const auto o = corner_offset(c);
        return std::atan2(o[v] - 0.5, o[u] - 0.5);
      };
      std::sort(corners.begin(), corners.end(), [&](int a, int b) { return angle(a) < angle(b); });
      if (side == 0) std::reverse(corners.begin(), corners.end());
      faces[axis * 2 + side] = corners;
    }
  }

  for (int mask = 0; mask < 256; ++mask) {
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& face : faces) {
      auto neg = [&](int i) { return (mask >> face[(i + 4) % 4]) & 1; };
      for (int i = 0; i < 4; ++i) {
        if (!neg(i) || neg(i - 1)) continue;
        int j = i;
        while (neg(j + 1) && j < i + 3) ++j;
        if (j == i + 3) continue;  // whole face negative
        const int before = find_edge(t, face[(i + 3) % 4], face[i]);
        const int after = find_edge(t, face[j % 4], face[(j + 1) % 4]);
        next[after] = before;
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int cur = start; !used[cur]; cur = next[cur]) {
        used[cur] = true;
        loop.push_back(cur);
      }
      for (size_t k = 1; k + 1 < loop.size(); ++k) {
        t.triangles[mask].insert(t.triangles[mask].end(), {loop[0], loop[k], loop[k + 1]});
      }
    }
  }

  // Orient so normals point from negative to positive corners: with only
  // corner 0 negative the normal must point along +(1,1,1).
  auto mid = [&](int edge) {
    const auto a = corner_offset(t.edge_corners[edge][0]);
    const auto b = corner_offset(t.edge_corners[edge][1]);
    return Vec3{(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5};
  };
  const auto& tri = t.triangles[1];
  const Vec3 normal = cross(mid(tri[1]) - mid(tri[0]), mid(tri[2]) - mid(tri[0]));
  if (dot(normal, Vec3{1, 1, 1}) < 0) {
    for (auto& list : t.triangles) {
      for (size_t k = 0; k < list.size(); k += 3) std::swap(list[k + 1], list[k + 2]);
    }
  }
  return t;
}

const CubeTables& cube_tables() {
  static const CubeTables tables = build_tables();
  return tables;
}

}  // namespace

TriangleMesh marching_cubes_dual(const DenseField3D& field, double iso) {
  const auto& tables = cube_tables();
  const int n = field.resolution();
  TriangleMesh mesh;
  if (n < 2) return mesh;
  // Vertex id per (grid node, axis) edge of the dual grid.
  std::vector<int32_t> edge_vertex(field.size() * 3, -1);
  const auto values = field.values();

  auto vertex_for = [&](int i, int j, int k, int edge) -> uint32_t {
    const auto a = corner_offset(tables.edge_corners[edge][0]);
    const int axis = tables.edge_axis[edge];
    const int ni = i + a[0], nj = j + a[1], nk = k + a[2];
    const size_t node = field.index(ni, nj, nk);
    int32_t& slot = edge_vertex[node * 3 + axis];
    if (slot >= 0) return static_cast<uint32_t>(slot);
    Int3 other{ni, nj, nk};
    other[axis] += 1;
    const double v0 = values[node];
    const double v1 = field.at(other[0], other[1], other[2]);
    const double s = (iso - v0) / (v1 - v0);
    Vec3 p = field.cell_center(ni, nj, nk);
    p[axis] += s * field.spacing();
    mesh.vertices.push_back(p);
    slot = static_cast<int32_t>(mesh.vertices.size() - 1);
    return static_cast<uint32_t>(slot);
  };

  for (int i = 0; i + 1 < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      for (int k = 0; k + 1 < n; ++k) {
        int mask = 0;
        for (int c = 0; c < 8; ++c) {
          const auto o = corner_offset(c);
          if (values[field.index(i + o[0], j + o[1], k + o[2])] < iso) mask |= 1 << c;
        }
        const auto& list = tables.triangles[mask];
        for (size_t t = 0; t < list.size(); t += 3) {
          mesh.triangles.push_back({vertex_for(i, j, k, list[t]), vertex_for(i, j, k, list[t + 1]),
                                    vertex_for(i, j, k, list[t + 2])});
        }
      }
    }
  }
  return mesh;
}

std::string to_obj_string(const TriangleMesh& mesh) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  return out.str();
}

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("io-error", "cannot open " + path.string());
  out << to_obj_string(mesh);
}

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error("obj-parse", "line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z)) fail("expected three vertex coordinates");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<uint32_t> poly;
      std::string token;
      while (ls >> token) {
        const std::string head = token.substr(0, token.find('/'));
        long idx = 0;
        auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
        if (ec != std::errc() || ptr != head.data() + head.size() || idx == 0) fail("bad face index '" + token + "'");
        const long resolved = idx > 0 ? idx - 1 : static_cast<long>(mesh.vertices.size()) + idx;
        if (resolved < 0 || resolved >= static_cast<long>(mesh.vertices.size())) fail("face index out of range");
        poly.push_back(static_cast<uint32_t>(resolved));
      }
      if (poly.size() < 3) fail("face with fewer than three vertices");
      for (size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  return mesh;
}

TriangleMesh import_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_obj(buf.str());
}

std::vector<size_t> occupancy_component_sizes(const DenseField3D& occ) {
  const int n = occ.resolution();
  std::vector<uint8_t> seen(occ.size(), 0);
  std::vector<size_t> sizes;
  constexpr std::array<Int3, 6> kSteps{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const size_t start = occ.index(i, j, k);
        if (seen[start] || occ.values()[start] <= 0.5) continue;
        size_t count = 0;
        std::queue<Int3> q;
        q.push({i, j, k});
        seen[start] = 1;
        while (!q.empty()) {
          const Int3 c = q.front();
          q.pop();
          ++count;
          for (const auto& s : kSteps) {
            const int a = c[0] + s[0], b = c[1] + s[1], d = c[2] + s[2];
            if (a < 0 || b < 0 || d < 0 || a >= n || b >= n || d >= n) continue;
            const size_t idx = occ.index(a, b, d);
            if (seen[idx] || occ.values()[idx] <= 0.5) continue;
            seen[idx] = 1;
            q.push({a, b, d});
          }
        }
        sizes.push_back(count);
      }
    }
  }
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

}  // namespace lasdiff
