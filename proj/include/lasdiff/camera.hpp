#pragma once

#include <string>
#include <vector>

#include "lasdiff/vec.hpp"

namespace lasdiff {

/// Perspective camera on a sphere around the origin, looking at the origin
/// with +y up. Azimuth 0 places the camera on +z; negative azimuth moves it
/// towards -x ("left").
struct CameraView {
  std::string name;
  double azimuth = 0;     // degrees
  double elevation = 15;  // degrees
  double distance = 2.5;
  double fov_y = 45;      // degrees
  int image_size = 224;

  Vec3 position() const;
  /// Throws Error("invalid-view") when the invariants are violated.
  void validate() const;
};

struct ProjectedPoint {
  Vec2 pixel;
  double depth = 0;
  bool valid = false;  // false when the point is at or behind the camera plane
};

/// Look-at extrinsics followed by pinhole intrinsics; pixel (0,0) is the top
/// left corner, rows grow downwards, the principal point is the image center.
ProjectedPoint project_point(const CameraView& view, const Vec3& p);

/// left, side-left, front, side-right, right.
std::vector<CameraView> predefined_views();
const CameraView& predefined_view(const std::string& name);
std::vector<std::string> predefined_view_names();

/// Cell centers of a level grid over [-1,1]^3, x-major order.
std::vector<ProjectedPoint> project_voxel_centers(int level_resolution, const CameraView& view);

/// Non-overlapping square patches tiling a square image.
struct PatchLayout {
  int image_size = 224;
  int patch_width = 14;

  int per_side() const { return image_size / patch_width; }
  int count() const { return per_side() * per_side(); }
  /// Pixel center of patch `j` (row-major).
  Vec2 center(int j) const {
    const int row = j / per_side(), col = j % per_side();
    return {(col + 0.5) * patch_width, (row + 0.5) * patch_width};
  }
  bool operator==(const PatchLayout&) const = default;
};

/// Boolean voxel x patch matrix, true = attend.
struct AttentionMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> bits;

  bool at(int r, int c) const { return bits[static_cast<size_t>(r) * cols + c] != 0; }
};

/// Row r, column j is set iff the projection is valid and
/// |p_r - center(P_j)| < d_delta (pixels).
AttentionMask build_attention_mask(const std::vector<ProjectedPoint>& projected, const PatchLayout& layout,
                                   double d_delta);

/// All-true mask (the view-agnostic ablation).
AttentionMask full_attention_mask(int rows, int cols);

}  // namespace lasdiff
