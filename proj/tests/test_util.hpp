#pragma once

#include <cmath>
#include <functional>

#include "lasdiff/fields.hpp"

namespace lasdiff::testing {

inline DenseField3D analytic_field(int n, const std::function<double(const Vec3&)>& f) {
  DenseField3D field(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) field.at(i, j, k) = f(field.cell_center(i, j, k));
  return field;
}

inline double sphere_sdf(const Vec3& p, double r, const Vec3& c = {}) { return norm(p - c) - r; }

inline double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q{std::abs(p.x) - half.x, std::abs(p.y) - half.y, std::abs(p.z) - half.z};
  const Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
  return norm(outside) + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
}

inline double torus_sdf(const Vec3& p, double major, double minor) {
  const double qx = std::sqrt(p.x * p.x + p.z * p.z) - major;
  return std::sqrt(qx * qx + p.y * p.y) - minor;
}

}  // namespace lasdiff::testing
