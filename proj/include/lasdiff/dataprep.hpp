#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lasdiff/camera.hpp"
#include "lasdiff/fields.hpp"
#include "lasdiff/image.hpp"
#include "lasdiff/render.hpp"
#include "lasdiff/triangle_mesh.hpp"

namespace lasdiff {

/// A shape as a set of closed parts; its SDF is the pointwise min of the part SDFs.
struct Shape {
  std::string id;
  std::string family;
  std::vector<TriangleMesh> parts;

  TriangleMesh merged() const;
};

DenseField3D shape_sdf(const Shape& shape, int resolution);

inline constexpr double kMaxAzimuthPerturbation = 22.5;
inline constexpr double kMaxElevationPerturbation = 5.0;

/// Adds u_az * 22.5 degrees of azimuth and u_el * 5 degrees of elevation, u in [-1, 1].
CameraView perturb_view(const CameraView& base, double u_az, double u_el);
CameraView perturb_view(const CameraView& base, std::mt19937_64& rng);

struct SketchRecord {
  std::string shape_id;
  GrayImage sketch;
  CameraView true_view;
  std::string view_bucket;
  int view_index = 0;
};

struct SketchOptions {
  int perturbations_per_view = 10;
  CannyOptions canny;
  uint64_t seed = 0;
};

/// Shading render followed by Canny edges.
GrayImage sketch_of(const std::vector<TriangleMesh>& parts, const CameraView& view, const CannyOptions& canny = {});

/// 5 views x perturbations per shape. Shapes whose render fails are skipped
/// and reported in `skipped`.
std::vector<SketchRecord> build_sketch_dataset(const std::vector<Shape>& shapes, const SketchOptions& options,
                                               std::vector<std::string>* skipped = nullptr);

struct AugmentedShape {
  Shape shape;              // both sources, translated
  DenseField3D sdf;         // union field
  std::string source_a, source_b;
  Vec3 t_a, t_b;
};

inline constexpr double kMaxUnionTranslation = 0.2;

/// |shapes| unions of two distinct random shapes with per-axis translations
/// in [-0.2, 0.2]. Throws Error("too-few-shapes").
std::vector<AugmentedShape> build_augmented_shapes(const std::vector<Shape>& shapes,
                                                   const std::vector<DenseField3D>& sdfs, std::mt19937_64& rng);

struct PreparedShape {
  std::string id;
  DenseField3D sdf;        // fine
  DenseField3D occupancy;  // coarse shell
};

/// Fine SDF and coarse shell occupancy of one shape.
PreparedShape prepare_shape(const Shape& shape, int fine_resolution, int coarse_resolution, double threshold);

/// Writes sketches (PNG), fields (LASF) and a JSON-lines manifest under `dir`.
void write_dataset(const std::filesystem::path& dir, const std::vector<PreparedShape>& shapes,
                   const std::vector<SketchRecord>& records);

struct ManifestEntry {
  std::string shape_id;
  std::string view_bucket;
  double azimuth = 0, elevation = 0, distance = 0, fov_y = 0;
  std::string sketch, sdf, occupancy;  // paths relative to the manifest
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

}  // namespace lasdiff
