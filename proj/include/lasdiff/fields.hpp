#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "lasdiff/error.hpp"
#include "lasdiff/triangle_mesh.hpp"
#include "lasdiff/vec.hpp"

namespace lasdiff {

enum class FieldKind : uint8_t { sdf = 0, occupancy = 1 };

/// Largest distance between two points of the [-1,1]^3 domain.
inline constexpr double kMaxDomainDistance = 3.4641016151377544;  // 2*sqrt(3)

/// Default shell threshold on fine SDF values when deriving coarse occupancy.
inline constexpr double kShellThreshold = 1.0 / 32.0;

/// Regular N^3 grid over [-1,1]^3. Values are stored x-major:
/// index(i, j, k) = (i * N + j) * N + k, cell centers at -1 + (i + 0.5) * h.
class DenseField3D {
 public:
  DenseField3D() = default;
  DenseField3D(int resolution, double fill, FieldKind kind = FieldKind::sdf);
  DenseField3D(int resolution, std::vector<double> values, FieldKind kind = FieldKind::sdf);

  int resolution() const { return resolution_; }
  double spacing() const { return 2.0 / resolution_; }
  FieldKind kind() const { return kind_; }
  size_t size() const { return values_.size(); }

  size_t index(int i, int j, int k) const {
    return (static_cast<size_t>(i) * resolution_ + j) * resolution_ + k;
  }
  double& at(int i, int j, int k) { return values_[index(i, j, k)]; }
  double at(int i, int j, int k) const { return values_[index(i, j, k)]; }

  Vec3 cell_center(int i, int j, int k) const;

  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }

  /// Checks finiteness and the payload range invariant; throws Error("invalid-field").
  void validate() const;

  bool operator==(const DenseField3D&) const = default;

 private:
  int resolution_ = 0;
  FieldKind kind_ = FieldKind::sdf;
  std::vector<double> values_;
};

/// Explicit list of occupied fine voxels, lexicographically sorted.
struct SparseVoxelGrid {
  int resolution = 0;
  std::vector<Int3> coords;
  std::vector<double> values;

  int parent_resolution() const { return resolution / 2; }
  size_t size() const { return coords.size(); }

  /// Sorted/unique/in-range coordinates and subdivision closure
  /// (the coordinate set is a union of complete 8-child blocks).
  void validate() const;

  /// Sorts coordinates (carrying values) into lexicographic order.
  void canonicalize();
};

/// Clamp band and scale that map raw SDF values near the surface into [-1,1].
struct SdfNormalization {
  double band;  // raw values are clamped to [-band, band]

  static SdfNormalization for_resolution(int fine_resolution) {
    return {3.0 * 2.0 / fine_resolution};
  }
  double normalize(double raw) const;
  double denormalize(double v) const { return v * band; }
};

/// Uniform scale + translation so the bounding box is centered at the origin
/// and its longest side spans [-0.8, 0.8].
TriangleMesh normalize_mesh(const TriangleMesh& mesh);

/// Discrete SDF sampled at cell centers. Requires a watertight mesh.
DenseField3D mesh_to_sdf(const TriangleMesh& mesh, int resolution);

/// Coarse shell occupancy: a coarse cell is occupied iff one of its 8 fine
/// children satisfies |v| <= threshold.
DenseField3D derive_occupancy(const DenseField3D& fine_sdf, int coarse_resolution,
                              double threshold = kShellThreshold);

/// Same-resolution shell: 1 iff |g| <= delta.
DenseField3D occupancy_from_sdf(const DenseField3D& sdf, double delta);

/// All 8 children of every occupied cell (value > 0.5), values zeroed.
SparseVoxelGrid subdivide_occupied(const DenseField3D& occupancy);

/// One-voxel 26-neighborhood dilation of an occupancy field.
DenseField3D dilate_occupancy(const DenseField3D& occupancy);

/// Copies fine SDF values at the grid coordinates and normalizes them.
SparseVoxelGrid restrict_to_sparse(const DenseField3D& fine_sdf, const SparseVoxelGrid& grid);

/// Trilinear lookup at a world point; outside the cell-center hull the
/// nearest in-domain cells are used, outside [-1,1]^3 returns `outside`.
double sample_trilinear(const DenseField3D& field, const Vec3& p,
                        double outside = kMaxDomainDistance);

/// Pointwise min of the two fields translated by t_a / t_b.
DenseField3D union_shapes(const DenseField3D& sdf_a, const DenseField3D& sdf_b, const Vec3& t_a,
                          const Vec3& t_b);

// LASF container: "LASF", version u32, kind u8 (0 dense SDF, 1 dense
// occupancy, 2 sparse), resolution u32, then little-endian payload.
inline constexpr uint32_t kLasfVersion = 1;

void write_field(const std::filesystem::path& path, const DenseField3D& field);
void write_field(const std::filesystem::path& path, const SparseVoxelGrid& grid);
std::variant<DenseField3D, SparseVoxelGrid> read_field(const std::filesystem::path& path);

std::vector<uint8_t> encode_field(const DenseField3D& field);
std::vector<uint8_t> encode_field(const SparseVoxelGrid& grid);
std::variant<DenseField3D, SparseVoxelGrid> decode_field(std::span<const uint8_t> bytes);

}  // namespace lasdiff
