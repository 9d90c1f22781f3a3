#include "lasdiff/fields.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lasdiff {

DenseField3D::DenseField3D(int resolution, double fill, FieldKind kind)
    : resolution_(resolution), kind_(kind) {
  if (resolution <= 0) throw Error("invalid-resolution");
  values_.assign(static_cast<size_t>(resolution) * resolution * resolution, fill);
}

DenseField3D::DenseField3D(int resolution, std::vector<double> values, FieldKind kind)
    : resolution_(resolution), kind_(kind), values_(std::move(values)) {
  if (resolution <= 0) throw Error("invalid-resolution");
  if (values_.size() != static_cast<size_t>(resolution) * resolution * resolution) {
    throw Error("invalid-field", "value count does not match resolution^3");
  }
}

Vec3 DenseField3D::cell_center(int i, int j, int k) const {
  const double h = spacing();
  return {-1.0 + (i + 0.5) * h, -1.0 + (j + 0.5) * h, -1.0 + (k + 0.5) * h};
}

void DenseField3D::validate() const {
  if (values_.size() != static_cast<size_t>(resolution_) * resolution_ * resolution_) {
    throw Error("invalid-field", "value count does not match resolution^3");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error("invalid-field", "non-finite value");
    if (kind_ == FieldKind::sdf && std::abs(v) > kMaxDomainDistance + 1e-9) {
      throw Error("invalid-field", "sdf value exceeds domain diameter");
    }
    if (kind_ == FieldKind::occupancy && v != 0.0 && v != 1.0) {
      throw Error("invalid-field", "occupancy value not in {0,1}");
    }
  }
}

void SparseVoxelGrid::canonicalize() {
  std::vector<size_t> order(coords.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return coords[a] < coords[b]; });
  std::vector<Int3> c(coords.size());
  std::vector<double> v(values.size());
  for (size_t i = 0; i < order.size(); ++i) {
    c[i] = coords[order[i]];
    if (!values.empty()) v[i] = values[order[i]];
  }
  coords = std::move(c);
  values = std::move(v);
}

void SparseVoxelGrid::validate() const {
  if (resolution <= 0 || resolution % 2 != 0) throw Error("invalid-sparse", "resolution must be even");
  if (values.size() != coords.size()) throw Error("invalid-sparse", "value/coord count mismatch");
  for (size_t i = 0; i < coords.size(); ++i) {
    for (int c : coords[i]) {
      if (c < 0 || c >= resolution) throw Error("invalid-sparse", "coordinate out of range");
    }
    if (i > 0 && !(coords[i - 1] < coords[i])) throw Error("invalid-sparse", "coords not sorted/unique");
    if (!std::isfinite(values[i])) throw Error("invalid-sparse", "non-finite value");
  }
  std::vector<Int3> parents;
  parents.reserve(coords.size());
  for (const auto& c : coords) parents.push_back({c[0] / 2, c[1] / 2, c[2] / 2});
  std::sort(parents.begin(), parents.end());
  for (size_t i = 0; i < parents.size();) {
    size_t j = i;
    while (j < parents.size() && parents[j] == parents[i]) ++j;
    if (j - i != 8) throw Error("invalid-sparse", "incomplete 8-child block");
    i = j;
  }
}

double SdfNormalization::normalize(double raw) const {
  return std::clamp(raw, -band, band) / band;
}

TriangleMesh normalize_mesh(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) throw Error("empty-mesh");
  mesh.validate();
  auto [lo, hi] = mesh.bounds();
  double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
  if (!(extent > 1e-12)) throw Error("degenerate-extent");
  const Vec3 center = (lo + hi) * 0.5;
  const double scale = 1.6 / extent;
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = (v - center) * scale;
  return out;
}

DenseField3D derive_occupancy(const DenseField3D& fine_sdf, int coarse_resolution, double threshold) {
  if (fine_sdf.resolution() != 2 * coarse_resolution) {
    throw Error("resolution-mismatch", "fine resolution must be twice the coarse resolution");
  }
  DenseField3D occ(coarse_resolution, 0.0, FieldKind::occupancy);
  for (int i = 0; i < coarse_resolution; ++i) {
    for (int j = 0; j < coarse_resolution; ++j) {
      for (int k = 0; k < coarse_resolution; ++k) {
        bool hit = false;
        for (int c = 0; c < 8 && !hit; ++c) {
          double v = fine_sdf.at(2 * i + (c & 1), 2 * j + ((c >> 1) & 1), 2 * k + ((c >> 2) & 1));
          hit = std::abs(v) <= threshold;
        }
        occ.at(i, j, k) = hit ? 1.0 : 0.0;
      }
    }
  }
  return occ;
}

DenseField3D occupancy_from_sdf(const DenseField3D& sdf, double delta) {
  if (!(delta > 0)) throw Error("invalid-threshold");
  std::vector<double> v(sdf.size());
  std::transform(sdf.values().begin(), sdf.values().end(), v.begin(),
                 [delta](double g) { return std::abs(g) <= delta ? 1.0 : 0.0; });
  return DenseField3D(sdf.resolution(), std::move(v), FieldKind::occupancy);
}

SparseVoxelGrid subdivide_occupied(const DenseField3D& occ) {
  SparseVoxelGrid grid;
  const int n = occ.resolution();
  grid.resolution = 2 * n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        if (occ.at(i, j, k) <= 0.5) continue;
        for (int c = 0; c < 8; ++c) {
          grid.coords.push_back({2 * i + (c & 1), 2 * j + ((c >> 1) & 1), 2 * k + ((c >> 2) & 1)});
        }
      }
    }
  }
  if (grid.coords.empty()) throw Error("empty-shell");
  std::sort(grid.coords.begin(), grid.coords.end());
  grid.values.assign(grid.coords.size(), 0.0);
  return grid;
}

DenseField3D dilate_occupancy(const DenseField3D& occ) {
  const int n = occ.resolution();
  DenseField3D out(n, 0.0, FieldKind::occupancy);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        if (occ.at(i, j, k) <= 0.5) continue;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            for (int dk = -1; dk <= 1; ++dk) {
              int a = i + di, b = j + dj, c = k + dk;
              if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) continue;
              out.at(a, b, c) = 1.0;
            }
          }
        }
      }
    }
  }
  return out;
}

SparseVoxelGrid restrict_to_sparse(const DenseField3D& fine_sdf, const SparseVoxelGrid& grid) {
  if (fine_sdf.resolution() != grid.resolution) throw Error("resolution-mismatch");
  const auto norm = SdfNormalization::for_resolution(grid.resolution);
  SparseVoxelGrid out = grid;
  out.values.resize(grid.coords.size());
  for (size_t n = 0; n < grid.coords.size(); ++n) {
    const auto& c = grid.coords[n];
    out.values[n] = norm.normalize(fine_sdf.at(c[0], c[1], c[2]));
  }
  return out;
}

double sample_trilinear(const DenseField3D& field, const Vec3& p, double outside) {
  const int n = field.resolution();
  const double h = field.spacing();
  int base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    if (p[a] < -1.0 || p[a] > 1.0) return outside;
    double u = std::clamp((p[a] + 1.0) / h - 0.5, 0.0, static_cast<double>(n - 1));
    int b = std::min(static_cast<int>(std::floor(u)), n - 2 < 0 ? 0 : n - 2);
    base[a] = b;
    frac[a] = n == 1 ? 0.0 : u - b;
  }
  if (n == 1) return field.at(0, 0, 0);
  double acc = 0;
  for (int c = 0; c < 8; ++c) {
    int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    double w = (dx ? frac[0] : 1 - frac[0]) * (dy ? frac[1] : 1 - frac[1]) * (dz ? frac[2] : 1 - frac[2]);
    if (w == 0.0) continue;
    acc += w * field.at(base[0] + dx, base[1] + dy, base[2] + dz);
  }
  return acc;
}

DenseField3D union_shapes(const DenseField3D& a, const DenseField3D& b, const Vec3& t_a, const Vec3& t_b) {
  if (a.resolution() != b.resolution()) throw Error("resolution-mismatch");
  for (const Vec3* t : {&t_a, &t_b}) {
    for (int ax = 0; ax < 3; ++ax) {
      if (std::abs((*t)[ax]) > 0.2 + 1e-12) throw Error("out-of-domain");
    }
  }
  const int n = a.resolution();
  DenseField3D out(n, 0.0, FieldKind::sdf);
  const bool a_fixed = t_a == Vec3{}, b_fixed = t_b == Vec3{};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const Vec3 z = a.cell_center(i, j, k);
        double va = a_fixed ? a.at(i, j, k) : sample_trilinear(a, z - t_a);
        double vb = b_fixed ? b.at(i, j, k) : sample_trilinear(b, z - t_b);
        out.at(i, j, k) = std::min(va, vb);
      }
    }
  }
  return out;
}

namespace {

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    for (size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<uint8_t>((static_cast<uint64_t>(value) >> (8 * i)) & 0xff));
  }
  void put_f32(float f) { put(std::bit_cast<uint32_t>(f)); }
  std::vector<uint8_t> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw Error("malformed-field", "truncated container");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() { return std::bit_cast<float>(get<uint32_t>()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

void put_header(ByteWriter& w, uint8_t kind, uint32_t resolution) {
  for (char c : {'L', 'A', 'S', 'F'}) w.put(static_cast<uint8_t>(c));
  w.put(kLasfVersion);
  w.put(kind);
  w.put(resolution);
}

void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io-error", "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::vector<uint8_t> encode_field(const DenseField3D& field) {
  ByteWriter w;
  put_header(w, static_cast<uint8_t>(field.kind()), static_cast<uint32_t>(field.resolution()));
  for (double v : field.values()) w.put_f32(static_cast<float>(v));
  return std::move(w.bytes);
}

std::vector<uint8_t> encode_field(const SparseVoxelGrid& grid) {
  ByteWriter w;
  put_header(w, 2, static_cast<uint32_t>(grid.resolution));
  w.put(static_cast<uint64_t>(grid.coords.size()));
  for (const auto& c : grid.coords) {
    for (int a : c) w.put(static_cast<uint16_t>(a));
  }
  for (double v : grid.values) w.put_f32(static_cast<float>(v));
  return std::move(w.bytes);
}

std::variant<DenseField3D, SparseVoxelGrid> decode_field(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  for (char c : {'L', 'A', 'S', 'F'}) {
    if (r.get<uint8_t>() != static_cast<uint8_t>(c)) throw Error("malformed-field", "bad magic");
  }
  if (r.get<uint32_t>() != kLasfVersion) throw Error("malformed-field", "unsupported version");
  const auto kind = r.get<uint8_t>();
  const auto resolution = static_cast<int>(r.get<uint32_t>());
  if (kind == 0 || kind == 1) {
    std::vector<double> values(static_cast<size_t>(resolution) * resolution * resolution);
    for (auto& v : values) v = r.get_f32();
    if (!r.done()) throw Error("malformed-field", "trailing bytes");
    return DenseField3D(resolution, std::move(values), kind == 0 ? FieldKind::sdf : FieldKind::occupancy);
  }
  if (kind != 2) throw Error("malformed-field", "unknown kind");
  SparseVoxelGrid grid;
  grid.resolution = resolution;
  const auto count = r.get<uint64_t>();
  if (count > bytes.size()) throw Error("malformed-field", "implausible count");
  grid.coords.resize(count);
  for (auto& c : grid.coords) {
    for (int& a : c) a = r.get<uint16_t>();
  }
  grid.values.resize(count);
  for (auto& v : grid.values) v = r.get_f32();
  if (!r.done()) throw Error("malformed-field", "trailing bytes");
  return grid;
}

void write_field(const std::filesystem::path& path, const DenseField3D& field) {
  write_bytes(path, encode_field(field));
}

void write_field(const std::filesystem::path& path, const SparseVoxelGrid& grid) {
  write_bytes(path, encode_field(grid));
}

std::variant<DenseField3D, SparseVoxelGrid> read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_field(bytes);
}

}  // namespace lasdiff
