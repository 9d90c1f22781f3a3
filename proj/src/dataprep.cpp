#include "lasdiff/dataprep.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"
#include "lasdiff/error.hpp"

namespace lasdiff {

TriangleMesh Shape::merged() const {
  TriangleMesh m;
  for (const auto& p : parts) m.append(p);
  return m;
}

DenseField3D shape_sdf(const Shape& shape, int resolution) {
  if (shape.parts.empty()) throw Error("empty-mesh", shape.id);
  DenseField3D out = mesh_to_sdf(shape.parts.front(), resolution);
  for (size_t i = 1; i < shape.parts.size(); ++i) {
    const auto f = mesh_to_sdf(shape.parts[i], resolution);
    auto& v = out.mutable_values();
    for (size_t k = 0; k < v.size(); ++k) v[k] = std::min(v[k], f.values()[k]);
  }
  return out;
}

CameraView perturb_view(const CameraView& base, double u_az, double u_el) {
  CameraView v = base;
  v.azimuth += std::clamp(u_az, -1.0, 1.0) * kMaxAzimuthPerturbation;
  v.elevation += std::clamp(u_el, -1.0, 1.0) * kMaxElevationPerturbation;
  return v;
}

CameraView perturb_view(const CameraView& base, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng);
  const double e = u(rng);
  return perturb_view(base, a, e);
}

GrayImage sketch_of(const std::vector<TriangleMesh>& parts, const CameraView& view, const CannyOptions& canny) {
  return canny_sketch(render_scene(parts, view), canny);
}

std::vector<SketchRecord> build_sketch_dataset(const std::vector<Shape>& shapes, const SketchOptions& options,
                                               std::vector<std::string>* skipped) {
  std::mt19937_64 rng(options.seed);
  const auto views = predefined_views();
  std::vector<SketchRecord> records;
  for (const auto& shape : shapes) {
    std::vector<SketchRecord> mine;
    try {
      if (shape.parts.empty()) throw Error("empty-mesh", shape.id);
      for (size_t v = 0; v < views.size(); ++v) {
        for (int k = 0; k < options.perturbations_per_view; ++k) {
          SketchRecord r;
          r.shape_id = shape.id;
          r.view_bucket = views[v].name;
          r.view_index = static_cast<int>(v);
          r.true_view = perturb_view(views[v], rng);
          r.sketch = sketch_of(shape.parts, r.true_view, options.canny);
          mine.push_back(std::move(r));
        }
      }
    } catch (const Error& e) {
      if (skipped) skipped->push_back(shape.id + ": " + e.what());
      continue;
    }
    for (auto& r : mine) records.push_back(std::move(r));
  }
  return records;
}

std::vector<AugmentedShape> build_augmented_shapes(const std::vector<Shape>& shapes,
                                                   const std::vector<DenseField3D>& sdfs, std::mt19937_64& rng) {
  if (shapes.size() < 2) throw Error("too-few-shapes", "augmentation needs at least two shapes");
  if (sdfs.size() != shapes.size()) throw Error("shape-mismatch", "one SDF per shape required");
  std::uniform_int_distribution<size_t> pick(0, shapes.size() - 1);
  std::uniform_real_distribution<double> shift(-kMaxUnionTranslation, kMaxUnionTranslation);
  std::vector<AugmentedShape> out;
  for (size_t n = 0; n < shapes.size(); ++n) {
    const size_t a = pick(rng);
    size_t b = pick(rng);
    while (b == a) b = pick(rng);
    AugmentedShape s;
    s.source_a = shapes[a].id;
    s.source_b = shapes[b].id;
    for (Vec3* t : {&s.t_a, &s.t_b}) {
      const double x = shift(rng), y = shift(rng), z = shift(rng);
      *t = {x, y, z};
    }
    s.sdf = union_shapes(sdfs[a], sdfs[b], s.t_a, s.t_b);
    s.shape.id = "aug-" + std::to_string(n);
    s.shape.family = "union";
    for (const auto& [src, t] : {std::pair{&shapes[a], s.t_a}, std::pair{&shapes[b], s.t_b}}) {
      for (auto part : src->parts) {
        for (auto& v : part.vertices) v = v + t;
        s.shape.parts.push_back(std::move(part));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

PreparedShape prepare_shape(const Shape& shape, int fine_resolution, int coarse_resolution, double threshold) {
  PreparedShape p;
  p.id = shape.id;
  p.sdf = shape_sdf(shape, fine_resolution);
  p.occupancy = derive_occupancy(p.sdf, coarse_resolution, threshold);
  return p;
}

namespace {

nlohmann::json view_json(const CameraView& v) {
  return {{"azimuth", v.azimuth}, {"elevation", v.elevation}, {"distance", v.distance}, {"fov_y", v.fov_y}};
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<PreparedShape>& shapes,
                   const std::vector<SketchRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "fields");
  fs::create_directories(dir / "sketches");
  for (const auto& s : shapes) {
    write_field(dir / "fields" / (s.id + ".sdf.lasf"), s.sdf);
    write_field(dir / "fields" / (s.id + ".occ.lasf"), s.occupancy);
  }
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw Error("io-error", (dir / "manifest.jsonl").string());
  std::map<std::string, int> counter;
  for (const auto& r : records) {
    std::ostringstream name;
    name << r.shape_id << "_" << r.view_bucket << "_" << std::setw(3) << std::setfill('0') << counter[r.shape_id]++
         << ".png";
    write_png(dir / "sketches" / name.str(), r.sketch);
    nlohmann::json line = {{"shape_id", r.shape_id},
                           {"view_bucket", r.view_bucket},
                           {"true_view", view_json(r.true_view)},
                           {"sketch", "sketches/" + name.str()},
                           {"sdf", "fields/" + r.shape_id + ".sdf.lasf"},
                           {"occupancy", "fields/" + r.shape_id + ".occ.lasf"}};
    manifest << line.dump() << "\n";
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("io-error", manifest.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.shape_id = j.at("shape_id");
      e.view_bucket = j.at("view_bucket");
      const auto& v = j.at("true_view");
      e.azimuth = v.at("azimuth");
      e.elevation = v.at("elevation");
      e.distance = v.at("distance");
      e.fov_y = v.at("fov_y");
      e.sketch = j.at("sketch");
      e.sdf = j.at("sdf");
      e.occupancy = j.at("occupancy");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed-manifest", "line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace lasdiff
