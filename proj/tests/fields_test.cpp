#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "lasdiff/fields.hpp"
#include "test_util.hpp"

using namespace lasdiff;
using lasdiff::testing::analytic_field;
using lasdiff::testing::sphere_sdf;

namespace {

// Independent point-triangle distance: plane projection with a barycentric
// inside test, otherwise the closest of the three edge segments.
double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
  return norm(p - (a + ab * t));
}

double brute_force_distance(const TriangleMesh& mesh, const Vec3& p) {
  double best = 1e300;
  for (const auto& tri : mesh.triangles) {
    const Vec3 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    const Vec3 n = normalized(cross(b - a, c - a));
    const Vec3 proj = p - n * dot(p - a, n);
    const double area = dot(cross(b - a, c - a), n);
    const double wa = dot(cross(c - b, proj - b), n) / area;
    const double wb = dot(cross(a - c, proj - c), n) / area;
    const double wc = 1 - wa - wb;
    double d;
    if (wa >= 0 && wb >= 0 && wc >= 0) {
      d = std::abs(dot(p - a, n));
    } else {
      d = std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
    }
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

TEST(NormalizeMesh, UnitCubeMapsToShapeBox) {
  const auto m = normalize_mesh(make_box({0, 0, 0}, {1, 1, 1}));
  auto [lo, hi] = m.bounds();
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(lo[a], -0.8, 1e-12);
    EXPECT_NEAR(hi[a], 0.8, 1e-12);
  }
}

TEST(NormalizeMesh, LongestAxisSpansShapeBox) {
  const auto m = normalize_mesh(make_box({3, -2, 5}, {5, -1, 6}));
  auto [lo, hi] = m.bounds();
  EXPECT_NEAR(hi.x - lo.x, 1.6, 1e-12);
  EXPECT_NEAR(hi.y - lo.y, 0.8, 1e-12);
  EXPECT_NEAR(hi.z - lo.z, 0.8, 1e-12);
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(lo[a] + hi[a], 0.0, 1e-12);
}

TEST(NormalizeMesh, Idempotent) {
  const auto once = normalize_mesh(make_icosphere(0.3, 2, {0.1, 0.2, -0.3}));
  const auto twice = normalize_mesh(once);
  ASSERT_EQ(once.vertices.size(), twice.vertices.size());
  for (size_t i = 0; i < once.vertices.size(); ++i) EXPECT_LT(norm(once.vertices[i] - twice.vertices[i]), 1e-7);
}

TEST(NormalizeMesh, DegenerateExtent) {
  TriangleMesh m;
  m.vertices = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  m.triangles = {{0, 1, 2}};
  try {
    normalize_mesh(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "degenerate-extent");
  }
}

TEST(MeshToSdf, IcosphereMatchesAnalyticSphere) {
  const auto mesh = make_icosphere(0.5, 4);
  const auto field = mesh_to_sdf(mesh, 32);
  double worst = 0;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      for (int k = 0; k < 32; ++k) {
        worst = std::max(worst, std::abs(field.at(i, j, k) - sphere_sdf(field.cell_center(i, j, k), 0.5)));
      }
  EXPECT_LT(worst, 0.01);
}

TEST(MeshToSdf, MagnitudeMatchesBruteForce) {
  const auto mesh = normalize_mesh(make_torus(0.5, 0.2, 24, 12));
  const auto field = mesh_to_sdf(mesh, 12);
  for (int i = 0; i < 12; i += 3)
    for (int j = 0; j < 12; j += 2)
      for (int k = 0; k < 12; k += 5) {
        EXPECT_NEAR(std::abs(field.at(i, j, k)), brute_force_distance(mesh, field.cell_center(i, j, k)), 1e-6);
      }
}

TEST(MeshToSdf, VertexOnCellCenterIsZero) {
  // Corners of the box coincide with cell centers at resolution 32.
  const double c = -1 + 3.5 / 16.0;
  const auto field = mesh_to_sdf(make_box({c, c, c}, {-c, -c, -c}), 32);
  EXPECT_NEAR(field.at(3, 3, 3), 0.0, 1e-6);
  EXPECT_NEAR(field.at(28, 28, 28), 0.0, 1e-6);
}

TEST(MeshToSdf, CubeCenterDepth) {
  const auto field = mesh_to_sdf(make_box({-0.8, -0.8, -0.8}, {0.8, 0.8, 0.8}), 33);
  EXPECT_NEAR(field.at(16, 16, 16), -0.8, 1e-9);
}

TEST(MeshToSdf, SignFlipsAtSurfaceAlongAxisRays) {
  const auto field = mesh_to_sdf(make_icosphere(0.5, 4), 32);
  for (int axis = 0; axis < 3; ++axis) {
    for (int t = 0; t < 32; ++t) {
      Int3 idx{15, 15, 15};
      idx[axis] = t;
      const Vec3 c = field.cell_center(idx[0], idx[1], idx[2]);
      const double r = norm(c);
      if (std::abs(r - 0.5) < 0.01) continue;
      EXPECT_EQ(field.at(idx[0], idx[1], idx[2]) < 0, r < 0.5) << "axis " << axis << " t " << t;
    }
  }
}

TEST(MeshToSdf, OpenSurfaceRejected) {
  auto m = make_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
  m.triangles.pop_back();
  try {
    mesh_to_sdf(m, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "open-surface");
  }
}

TEST(DeriveOccupancy, Examples) {
  DenseField3D fine(2, 0.02);
  EXPECT_EQ(derive_occupancy(fine, 1).at(0, 0, 0), 1.0);
  fine = DenseField3D(2, 0.5);
  EXPECT_EQ(derive_occupancy(fine, 1).at(0, 0, 0), 0.0);
  fine = DenseField3D(2, 0.2);
  fine.at(1, 0, 1) = -0.031;
  EXPECT_EQ(derive_occupancy(fine, 1).at(0, 0, 0), 1.0);
}

TEST(DeriveOccupancy, MatchesMaxOverChildrenOracle) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    DenseField3D fine(8, 0.0);
    for (auto& v : fine.mutable_values()) v = u(rng);
    const auto occ = derive_occupancy(fine, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
          double best = -1;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int c = 0; c < 2; ++c) best = std::max(best, std::abs(fine.at(2 * i + a, 2 * j + b, 2 * k + c)) <= 1.0 / 32 ? 1.0 : 0.0);
          ASSERT_EQ(occ.at(i, j, k), best);
        }
  }
}

TEST(DeriveOccupancy, ResolutionMismatch) {
  try {
    derive_occupancy(DenseField3D(8, 0.0), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "resolution-mismatch");
  }
}

TEST(OccupancyFromSdf, Examples) {
  const auto zeros = occupancy_from_sdf(DenseField3D(4, 0.0), 0.1);
  EXPECT_TRUE(std::all_of(zeros.values().begin(), zeros.values().end(), [](double v) { return v == 1.0; }));
  const auto far = occupancy_from_sdf(DenseField3D(4, 1.0), 0.1);
  EXPECT_TRUE(std::all_of(far.values().begin(), far.values().end(), [](double v) { return v == 0.0; }));
  EXPECT_THROW(occupancy_from_sdf(DenseField3D(4, 0.0), 0.0), Error);
}

TEST(OccupancyFromSdf, SphereShellCountMatchesAnalytic) {
  const int n = 32;
  const double h = 2.0 / n, delta = 2 * h;
  const auto sdf = analytic_field(n, [](const Vec3& p) { return sphere_sdf(p, 0.5); });
  const auto shell = occupancy_from_sdf(sdf, delta);
  size_t expected = 0, got = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        expected += std::abs(norm(sdf.cell_center(i, j, k)) - 0.5) <= delta;
        got += shell.at(i, j, k) > 0.5;
      }
  EXPECT_EQ(got, expected);
  EXPECT_GT(got, 0u);
}

TEST(SubdivideOccupied, SingleCell) {
  DenseField3D occ(4, 0.0, FieldKind::occupancy);
  occ.at(1, 2, 3) = 1.0;
  const auto grid = subdivide_occupied(occ);
  ASSERT_EQ(grid.coords.size(), 8u);
  std::set<Int3> expected;
  for (int a = 2; a <= 3; ++a)
    for (int b = 4; b <= 5; ++b)
      for (int c = 6; c <= 7; ++c) expected.insert({a, b, c});
  EXPECT_EQ(std::set<Int3>(grid.coords.begin(), grid.coords.end()), expected);
  EXPECT_EQ(grid.resolution, 8);
  EXPECT_NO_THROW(grid.validate());
}

TEST(SubdivideOccupied, CountIsEightPerParentOnRandomFields) {
  std::mt19937 rng(5);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    DenseField3D occ(6, 0.0, FieldKind::occupancy);
    size_t parents = 0;
    for (auto& v : occ.mutable_values()) {
      v = coin(rng) ? 1.0 : 0.0;
      parents += v > 0.5;
    }
    if (parents == 0) continue;
    const auto grid = subdivide_occupied(occ);
    EXPECT_EQ(grid.coords.size(), 8 * parents);
    EXPECT_NO_THROW(grid.validate());
  }
}

TEST(SubdivideOccupied, SphereShellMatchesEnumeration) {
  const auto fine = analytic_field(32, [](const Vec3& p) { return sphere_sdf(p, 0.55); });
  const auto occ = derive_occupancy(fine, 16);
  const auto grid = subdivide_occupied(occ);
  std::vector<Int3> expected;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      for (int k = 0; k < 32; ++k) {
        if (occ.at(i / 2, j / 2, k / 2) > 0.5) expected.push_back({i, j, k});
      }
  EXPECT_EQ(grid.coords, expected);
}

TEST(SubdivideOccupied, EmptyShell) {
  try {
    subdivide_occupied(DenseField3D(4, 0.0, FieldKind::occupancy));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "empty-shell");
  }
}

TEST(RestrictToSparse, NormalizationRule) {
  const int n = 128;
  const double h = 2.0 / n;
  DenseField3D fine(n, 0.0);
  fine.at(0, 0, 0) = 3 * h;
  fine.at(0, 0, 1) = -10 * h;
  SparseVoxelGrid grid;
  grid.resolution = n;
  for (int c = 0; c < 8; ++c) grid.coords.push_back({c & 1, (c >> 1) & 1, (c >> 2) & 1});
  std::sort(grid.coords.begin(), grid.coords.end());
  grid.values.assign(8, 0.0);
  const auto sparse = restrict_to_sparse(fine, grid);
  EXPECT_DOUBLE_EQ(sparse.values[0], 1.0);   // (0,0,0)
  EXPECT_DOUBLE_EQ(sparse.values[1], -1.0);  // (0,0,1)
  for (size_t i = 2; i < 8; ++i) EXPECT_EQ(sparse.values[i], 0.0);
  EXPECT_THROW(restrict_to_sparse(DenseField3D(64, 0.0), grid), Error);
}

TEST(UnionShapes, IdempotentAndIdentity) {
  const auto a = analytic_field(16, [](const Vec3& p) { return sphere_sdf(p, 0.4); });
  EXPECT_EQ(union_shapes(a, a, {}, {}), a);
  const DenseField3D empty(16, kMaxDomainDistance);
  EXPECT_EQ(union_shapes(a, empty, {}, {}), a);
}

TEST(UnionShapes, TwoTranslatedSpheres) {
  const int n = 32;
  const auto s = analytic_field(n, [](const Vec3& p) { return sphere_sdf(p, 0.3); });
  const Vec3 ta{-0.15, 0, 0}, tb{0.15, 0.1, 0};
  const auto u = union_shapes(s, s, ta, tb);
  const auto expected = analytic_field(n, [&](const Vec3& p) {
    return std::min(sphere_sdf(p, 0.3, ta), sphere_sdf(p, 0.3, tb));
  });
  auto inside = [](const Vec3& p) { return std::abs(p.x) <= 1 && std::abs(p.y) <= 1 && std::abs(p.z) <= 1; };
  int checked = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 z = u.cell_center(i, j, k);
        // outside the source grid the translated field is unknown
        if (!inside(z - ta) || !inside(z - tb)) continue;
        ++checked;
        EXPECT_NEAR(u.at(i, j, k), expected.at(i, j, k), 2.0 / n);
      }
  EXPECT_GT(checked, n * n * n / 2);
}

TEST(UnionShapes, CommutativeAndAssociativeAtZeroTranslation) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  auto random_field = [&] {
    DenseField3D f(8, 0.0);
    for (auto& v : f.mutable_values()) v = u(rng);
    return f;
  };
  const auto a = random_field(), b = random_field(), c = random_field();
  EXPECT_EQ(union_shapes(a, b, {}, {}), union_shapes(b, a, {}, {}));
  EXPECT_EQ(union_shapes(union_shapes(a, b, {}, {}), c, {}, {}), union_shapes(a, union_shapes(b, c, {}, {}), {}, {}));
}

TEST(UnionShapes, OutOfDomain) {
  const DenseField3D a(8, 0.0);
  try {
    union_shapes(a, a, {0.3, 0, 0}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "out-of-domain");
  }
}

TEST(Lasf, HeaderLayout) {
  const auto bytes = encode_field(DenseField3D(2, 0.5, FieldKind::occupancy));
  ASSERT_EQ(bytes.size(), 4u + 4 + 1 + 4 + 8 * 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "LASF");
  EXPECT_EQ(bytes[4], 1);  // version, little endian
  EXPECT_EQ(bytes[8], 1);  // dense occupancy
  EXPECT_EQ(bytes[9], 2);  // resolution
}

TEST(Lasf, RoundTripPreservesFloat32Values) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 5; ++trial) {
    DenseField3D dense(5 + trial, 0.0);
    for (auto& v : dense.mutable_values()) v = static_cast<float>(u(rng));
    EXPECT_EQ(std::get<DenseField3D>(decode_field(encode_field(dense))), dense);

    DenseField3D occ(4, 0.0, FieldKind::occupancy);
    occ.at(trial % 4, 1, 2) = 1.0;
    auto grid = subdivide_occupied(occ);
    for (auto& v : grid.values) v = static_cast<float>(u(rng));
    const auto back = std::get<SparseVoxelGrid>(decode_field(encode_field(grid)));
    EXPECT_EQ(back.coords, grid.coords);
    EXPECT_EQ(back.values, grid.values);
  }
  const auto bytes = encode_field(DenseField3D(2, 0.0));
  EXPECT_THROW(decode_field(std::span<const uint8_t>(bytes.data(), bytes.size() - 1)), Error);
}
