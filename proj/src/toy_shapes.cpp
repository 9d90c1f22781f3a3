#include "lasdiff/toy_shapes.hpp"

#include <algorithm>
#include <cmath>

namespace lasdiff {

TriangleMesh make_ellipsoid(const Vec3& radii, int subdivisions, const Vec3& center) {
  auto m = make_icosphere(1.0, subdivisions);
  for (auto& v : m.vertices) v = Vec3{v.x * radii.x, v.y * radii.y, v.z * radii.z} + center;
  return m;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 jitter(std::mt19937_64& rng, double amount) {
  return {uniform(rng, -amount, amount), uniform(rng, -amount, amount), uniform(rng, -amount, amount)};
}

TriangleMesh small_part(std::mt19937_64& rng, const Vec3& center) {
  if (uniform(rng, 0, 1) < 0.5) return make_icosphere(uniform(rng, 0.2, 0.35), 3, center);
  const Vec3 half{uniform(rng, 0.12, 0.3), uniform(rng, 0.12, 0.3), uniform(rng, 0.12, 0.3)};
  return make_box(center - half, center + half);
}

}  // namespace

std::vector<Shape> make_toy_shapes(int count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Shape> shapes;
  const char* families[] = {"sphere", "box", "ellipsoid", "union"};
  for (int i = 0; i < count; ++i) {
    Shape s;
    s.family = families[std::uniform_int_distribution<int>(0, 3)(rng)];
    s.id = "toy-" + std::to_string(i) + "-" + s.family;
    if (s.family == "sphere") {
      s.parts.push_back(make_icosphere(uniform(rng, 0.25, 0.55), 3, jitter(rng, 0.15)));
    } else if (s.family == "box") {
      const Vec3 c = jitter(rng, 0.1);
      const Vec3 half{uniform(rng, 0.15, 0.5), uniform(rng, 0.15, 0.5), uniform(rng, 0.15, 0.5)};
      s.parts.push_back(make_box(c - half, c + half));
    } else if (s.family == "ellipsoid") {
      s.parts.push_back(make_ellipsoid({uniform(rng, 0.2, 0.55), uniform(rng, 0.2, 0.55), uniform(rng, 0.2, 0.55)}, 3,
                                       jitter(rng, 0.1)));
    } else {
      Vec3 axis{};
      axis[std::uniform_int_distribution<int>(0, 2)(rng)] = uniform(rng, 0.15, 0.35);
      s.parts.push_back(small_part(rng, axis * -1.0));
      s.parts.push_back(small_part(rng, axis));
    }
    shapes.push_back(std::move(s));
  }
  return shapes;
}

BarFrame jitter_bar_frame(std::mt19937_64& rng) {
  BarFrame f;
  f.half_width = uniform(rng, 0.42, 0.62);
  f.half_height = uniform(rng, 0.76, 0.86);
  f.post = uniform(rng, 0.11, 0.16);
  f.bar = uniform(rng, 0.08, 0.11);
  f.depth = uniform(rng, 0.1, 0.18);
  f.shift = uniform(rng, -0.05, 0.05);
  return f;
}

Shape make_bar_shape(int bars, const BarFrame& f, const std::string& id) {
  Shape s;
  s.id = id;
  s.family = "bars" + std::to_string(bars);
  const double p = f.post / 2, d = f.depth / 2;
  for (double side : {-1.0, 1.0}) {
    const double x = side * f.half_width;
    s.parts.push_back(make_box({x - p, -f.half_height, -p}, {x + p, f.half_height, p}));
  }
  for (int b = 0; b < bars; ++b) {
    const double y = f.shift + (b - (bars - 1) / 2.0) * f.spacing;
    s.parts.push_back(make_box({-f.half_width, y - f.bar / 2, -d}, {f.half_width, y + f.bar / 2, d}));
  }
  return s;
}

}  // namespace lasdiff
