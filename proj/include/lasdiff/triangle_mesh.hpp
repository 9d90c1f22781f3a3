#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lasdiff/vec.hpp"

namespace lasdiff {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  /// Throws Error("invalid-mesh") on out-of-range indices or non-finite
  /// coordinates.
  void validate() const;

  /// Every undirected edge has exactly two incident triangles.
  bool is_watertight() const;

  /// Signed volume from the divergence theorem; positive for outward winding.
  double signed_volume() const;

  /// Appends `other`, re-indexing its triangles.
  void append(const TriangleMesh& other);

  std::pair<Vec3, Vec3> bounds() const;
};

/// Level-`subdivisions` icosphere (20 * 4^s triangles), outward winding.
TriangleMesh make_icosphere(double radius, int subdivisions, const Vec3& center = {});

/// Axis-aligned box split into 12 triangles, outward winding.
TriangleMesh make_box(const Vec3& min_corner, const Vec3& max_corner);

/// Torus around the y axis.
TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments,
                        int minor_segments, const Vec3& center = {});

}  // namespace lasdiff
