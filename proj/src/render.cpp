#include "lasdiff/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lasdiff/error.hpp"

namespace lasdiff {
namespace {

struct Raster {
  std::vector<double> depth;
  std::vector<uint8_t> gray;
  std::vector<uint8_t> covered;
};

// Per-corner normals: average of incident face normals within the crease angle.
std::vector<std::array<Vec3, 3>> corner_normals(const TriangleMesh& mesh) {
  const size_t nt = mesh.triangles.size();
  std::vector<Vec3> face(nt);
  for (size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 n = cross(mesh.vertices[tri[1]] - mesh.vertices[tri[0]], mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    const double len = norm(n);
    face[t] = len > 0 ? n / len : Vec3{};
  }
  std::vector<std::vector<uint32_t>> incident(mesh.vertices.size());
  for (size_t t = 0; t < nt; ++t) {
    for (uint32_t v : mesh.triangles[t]) incident[v].push_back(static_cast<uint32_t>(t));
  }
  const double crease = std::cos(30.0 * std::numbers::pi / 180.0);
  std::vector<std::array<Vec3, 3>> out(nt);
  for (size_t t = 0; t < nt; ++t) {
    for (int c = 0; c < 3; ++c) {
      Vec3 acc{};
      for (uint32_t other : incident[mesh.triangles[t][c]]) {
        if (dot(face[other], face[t]) >= crease) acc += face[other];
      }
      const double len = norm(acc);
      out[t][c] = len > 0 ? acc / len : face[t];
    }
  }
  return out;
}

void rasterize(const TriangleMesh& mesh, const CameraView& view, Raster& raster) {
  const int size = view.image_size;
  const Vec3 eye = view.position();
  const Vec3 light = normalized(eye);  // towards the camera
  const auto normals = corner_normals(mesh);
  std::vector<ProjectedPoint> proj(mesh.vertices.size());
  for (size_t v = 0; v < mesh.vertices.size(); ++v) proj[v] = project_point(view, mesh.vertices[v]);

  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const ProjectedPoint &a = proj[tri[0]], &b = proj[tri[1]], &c = proj[tri[2]];
    if (!a.valid || !b.valid || !c.valid) continue;
    const double area = (b.pixel.x - a.pixel.x) * (c.pixel.y - a.pixel.y) - (b.pixel.y - a.pixel.y) * (c.pixel.x - a.pixel.x);
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.pixel.x, b.pixel.x, c.pixel.x}))));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.pixel.x, b.pixel.x, c.pixel.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.pixel.y, b.pixel.y, c.pixel.y}))));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.pixel.y, b.pixel.y, c.pixel.y}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double w0 = (b.pixel.x - px) * (c.pixel.y - py) - (b.pixel.y - py) * (c.pixel.x - px);
        double w1 = (c.pixel.x - px) * (a.pixel.y - py) - (c.pixel.y - py) * (a.pixel.x - px);
        double w2 = (a.pixel.x - px) * (b.pixel.y - py) - (a.pixel.y - py) * (b.pixel.x - px);
        w0 /= area;
        w1 /= area;
        w2 /= area;
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        // perspective-correct interpolation
        const double iz = w0 / a.depth + w1 / b.depth + w2 / c.depth;
        const double depth = 1.0 / iz;
        const size_t idx = static_cast<size_t>(y) * size + x;
        if (depth >= raster.depth[idx]) continue;
        raster.depth[idx] = depth;
        raster.covered[idx] = 1;
        const Vec3 n = normals[t][0] * (w0 / a.depth * depth) + normals[t][1] * (w1 / b.depth * depth) +
                       normals[t][2] * (w2 / c.depth * depth);
        const double len = norm(n);
        const double lambert = len > 0 ? std::max(0.0, dot(n / len, light)) : 0.0;
        raster.gray[idx] = static_cast<uint8_t>(std::lround(kShadeDark + kShadeRange * lambert));
      }
    }
  }
}

Raster make_raster(int size) {
  const size_t n = static_cast<size_t>(size) * size;
  return {std::vector<double>(n, std::numeric_limits<double>::infinity()), std::vector<uint8_t>(n, 255),
          std::vector<uint8_t>(n, 0)};
}

}  // namespace

GrayImage render_scene(std::span<const TriangleMesh> meshes, const CameraView& view) {
  Raster raster = make_raster(view.image_size);
  for (const auto& mesh : meshes) rasterize(mesh, view, raster);
  GrayImage image(view.image_size, view.image_size);
  image.pixels = std::move(raster.gray);
  return image;
}

GrayImage render_shading(const TriangleMesh& mesh, const CameraView& view) {
  if (mesh.triangles.empty()) throw Error("empty-mesh");
  return render_scene(std::span<const TriangleMesh>(&mesh, 1), view);
}

std::vector<uint8_t> render_silhouette(const TriangleMesh& mesh, const CameraView& view) {
  Raster raster = make_raster(view.image_size);
  rasterize(mesh, view, raster);
  return raster.covered;
}

}  // namespace lasdiff
