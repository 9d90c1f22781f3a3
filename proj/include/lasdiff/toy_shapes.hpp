#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lasdiff/dataprep.hpp"

namespace lasdiff {

TriangleMesh make_ellipsoid(const Vec3& radii, int subdivisions, const Vec3& center = {});

/// Procedural spheres, boxes, ellipsoids and two-part unions with jittered
/// parameters, all inside [-0.8, 0.8]^3.
std::vector<Shape> make_toy_shapes(int count, uint64_t seed);

/// Two posts joined by horizontal bars.
struct BarFrame {
  double half_width = 0.5;   // post x position
  double half_height = 0.8;  // post extent in y
  double post = 0.14;        // post cross-section
  double bar = 0.12;         // bar thickness
  double depth = 0.14;       // z extent of the bars
  double shift = 0;          // vertical offset of the bar block
  double spacing = 0.55;     // bar pitch, wide enough to stay apart at 16^3
};

BarFrame jitter_bar_frame(std::mt19937_64& rng);
Shape make_bar_shape(int bars, const BarFrame& frame, const std::string& id);

}  // namespace lasdiff
