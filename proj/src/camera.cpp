#include "lasdiff/camera.hpp"

#include <cmath>
#include <numbers>

#include "lasdiff/error.hpp"

namespace lasdiff {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Bounding sphere radius of the normalized [-0.8,0.8]^3 box.
constexpr double kShapeRadius = 1.3856406460551018;

}  // namespace

Vec3 CameraView::position() const {
  const double az = azimuth * kDeg, el = elevation * kDeg;
  return Vec3{std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)} * distance;
}

void CameraView::validate() const {
  if (!(fov_y > 10 && fov_y < 120)) throw Error("invalid-view", "fov_y outside (10, 120)");
  if (!(distance > kShapeRadius)) throw Error("invalid-view", "camera inside the shape bounding sphere");
  if (image_size <= 0) throw Error("invalid-view", "image_size must be positive");
}

ProjectedPoint project_point(const CameraView& view, const Vec3& p) {
  const Vec3 eye = view.position();
  const Vec3 forward = normalized(-eye);
  const Vec3 right = normalized(cross(forward, Vec3{0, 1, 0}));
  const Vec3 up = cross(right, forward);
  const Vec3 d = p - eye;
  ProjectedPoint out;
  out.depth = dot(d, forward);
  if (out.depth <= 1e-9) return out;
  const double focal = 0.5 * view.image_size / std::tan(0.5 * view.fov_y * kDeg);
  const double c = 0.5 * view.image_size;
  out.pixel = {c + focal * dot(d, right) / out.depth, c - focal * dot(d, up) / out.depth};
  out.valid = true;
  return out;
}

std::vector<CameraView> predefined_views() {
  std::vector<CameraView> views;
  const std::pair<const char*, double> named[] = {
      {"left", -90}, {"side-left", -45}, {"front", 0}, {"side-right", 45}, {"right", 90}};
  for (const auto& [name, az] : named) {
    CameraView v;
    v.name = name;
    v.azimuth = az;
    views.push_back(v);
  }
  return views;
}

const CameraView& predefined_view(const std::string& name) {
  static const std::vector<CameraView> views = predefined_views();
  for (const auto& v : views) {
    if (v.name == name) return v;
  }
  std::string valid;
  for (const auto& v : views) valid += (valid.empty() ? "" : ", ") + v.name;
  throw Error("unknown-view", "'" + name + "' (valid: " + valid + ")");
}

std::vector<std::string> predefined_view_names() {
  std::vector<std::string> names;
  for (const auto& v : predefined_views()) names.push_back(v.name);
  return names;
}

std::vector<ProjectedPoint> project_voxel_centers(int level_resolution, const CameraView& view) {
  if (level_resolution < 1) throw Error("invalid-resolution");
  const double h = 2.0 / level_resolution;
  std::vector<ProjectedPoint> out;
  out.reserve(static_cast<size_t>(level_resolution) * level_resolution * level_resolution);
  for (int i = 0; i < level_resolution; ++i) {
    for (int j = 0; j < level_resolution; ++j) {
      for (int k = 0; k < level_resolution; ++k) {
        out.push_back(project_point(view, {-1 + (i + 0.5) * h, -1 + (j + 0.5) * h, -1 + (k + 0.5) * h}));
      }
    }
  }
  return out;
}

AttentionMask build_attention_mask(const std::vector<ProjectedPoint>& projected, const PatchLayout& layout,
                                   double d_delta) {
  if (!(d_delta > 0)) throw Error("invalid-threshold", "d_delta must be positive");
  AttentionMask mask{static_cast<int>(projected.size()), layout.count(), {}};
  mask.bits.assign(static_cast<size_t>(mask.rows) * mask.cols, 0);
  const double r2 = d_delta * d_delta;
  for (int r = 0; r < mask.rows; ++r) {
    if (!projected[r].valid) continue;
    const Vec2 p = projected[r].pixel;
    for (int j = 0; j < mask.cols; ++j) {
      const Vec2 c = layout.center(j);
      const double dx = p.x - c.x, dy = p.y - c.y;
      mask.bits[static_cast<size_t>(r) * mask.cols + j] = dx * dx + dy * dy < r2;
    }
  }
  return mask;
}

AttentionMask full_attention_mask(int rows, int cols) {
  return {rows, cols, std::vector<uint8_t>(static_cast<size_t>(rows) * cols, 1)};
}

}  // namespace lasdiff
