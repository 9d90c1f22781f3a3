#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lasdiff/fields.hpp"
#include "lasdiff/triangle_mesh.hpp"

namespace lasdiff {

struct CompletedField {
  DenseField3D field;
  /// Set when the flood fill from the boundary reaches a shell cell with a
  /// negative value, i.e. the exterior leaks into the shape.
  bool leaky_shell = false;
};

/// Dense SDF from a sparse shell of de-normalized values. Unoccupied cells
/// reachable from the domain boundary (6-connected) get +band, the rest -band.
CompletedField complete_field(const SparseVoxelGrid& sparse, double band);

/// Same, using the default clamp band 3h of the sparse grid resolution.
CompletedField complete_field(const SparseVoxelGrid& sparse);

/// Marching cubes on the dual grid (cube corners at cell centers). Vertices
/// are shared between neighbouring cubes, normals point towards increasing
/// field values.
TriangleMesh marching_cubes_dual(const DenseField3D& field, double iso = 0.0);

void export_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
std::string to_obj_string(const TriangleMesh& mesh);

/// Parses `v` and `f` records; polygons are fan-triangulated, negative
/// (relative) indices resolved. Throws Error("obj-parse") with the line number.
TriangleMesh import_obj(const std::filesystem::path& path);
TriangleMesh parse_obj(const std::string& text);

/// 6-connected components of the cells with value > 0.5, largest first.
std::vector<size_t> occupancy_component_sizes(const DenseField3D& occupancy);

}  // namespace lasdiff
