#pragma once

#include <span>
#include <vector>

#include "lasdiff/camera.hpp"
#include "lasdiff/image.hpp"
#include "lasdiff/triangle_mesh.hpp"

namespace lasdiff {

/// Gray levels of the shading ramp: lit = kShadeDark + kShadeRange * max(0, n.l).
/// The ramp stays below white so silhouettes always contrast with the background.
inline constexpr double kShadeDark = 40.0;
inline constexpr double kShadeRange = 180.0;

/// Z-buffered software rasterization, directional light along the viewing
/// direction, white background, no anti-aliasing. Normals are smoothed across
/// edges whose dihedral angle is below 30 degrees. Throws Error("empty-mesh").
GrayImage render_shading(const TriangleMesh& mesh, const CameraView& view);

/// Renders several meshes into one z-buffer; an empty scene is all white.
GrayImage render_scene(std::span<const TriangleMesh> meshes, const CameraView& view);

/// Coverage mask (1 where any triangle covers the pixel center).
std::vector<uint8_t> render_silhouette(const TriangleMesh& mesh, const CameraView& view);

struct CannyOptions {
  double sigma = 1.4;
  double low_threshold = 50;
  double high_threshold = 150;
};

/// Gaussian blur, Sobel gradients (L2 magnitude), non-maximum suppression and
/// hysteresis; returns black strokes (0) on white (255).
GrayImage canny_sketch(const GrayImage& image, const CannyOptions& options = {});

}  // namespace lasdiff
