#include "lasdiff/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>

#include "lasdiff/error.hpp"

namespace lasdiff {

std::string to_string(Protocol p) { return p == Protocol::sketch ? "sketch" : "category"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "sketch") return Protocol::sketch;
  if (s == "category") return Protocol::category;
  throw Error("invalid-config", "unknown protocol " + s);
}

void to_json(nlohmann::json& j, const SampleRecord& r) {
  j = {{"name", r.name},
       {"seed", r.seed},
       {"mesh", r.mesh},
       {"occupancy", r.occupancy},
       {"sketch", r.sketch},
       {"view", r.view},
       {"true_view",
        {{"azimuth", r.true_view.azimuth},
         {"elevation", r.true_view.elevation},
         {"distance", r.true_view.distance},
         {"fov_y", r.true_view.fov_y}}},
       {"reference_mesh", r.reference_mesh},
       {"reference_occupancy", r.reference_occupancy},
       {"category", r.category},
       {"warnings", r.warnings}};
}

void from_json(const nlohmann::json& j, SampleRecord& r) {
  r.name = j.at("name");
  r.seed = j.value("seed", uint64_t{0});
  r.mesh = j.value("mesh", "");
  r.occupancy = j.value("occupancy", "");
  r.sketch = j.value("sketch", "");
  r.view = j.value("view", "");
  if (!r.view.empty()) r.true_view = predefined_view(r.view);
  if (j.contains("true_view")) {
    const auto& v = j.at("true_view");
    r.true_view.azimuth = v.value("azimuth", r.true_view.azimuth);
    r.true_view.elevation = v.value("elevation", r.true_view.elevation);
    r.true_view.distance = v.value("distance", r.true_view.distance);
    r.true_view.fov_y = v.value("fov_y", r.true_view.fov_y);
  }
  r.reference_mesh = j.value("reference_mesh", "");
  r.reference_occupancy = j.value("reference_occupancy", "");
  r.category = j.value("category", "");
  r.warnings = j.value("warnings", std::vector<std::string>{});
}

void write_sample(const RunLayout& run, SampleRecord r, const Generation& g) {
  std::filesystem::create_directories(run.samples());
  r.mesh = "samples/" + r.name + ".obj";
  r.occupancy = "samples/" + r.name + ".occ.lasf";
  r.warnings = g.warnings;
  export_obj(g.mesh, run.root / r.mesh);
  write_field(run.root / r.occupancy, g.occupancy);
  std::ofstream out(run.samples() / (r.name + ".json"));
  if (!out) throw Error("io-error", r.name);
  out << nlohmann::json(r).dump(2) << "\n";
}

std::vector<SampleRecord> read_samples(const RunLayout& run) {
  std::vector<SampleRecord> out;
  if (!std::filesystem::exists(run.samples())) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(run.samples()))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    nlohmann::json j;
    try {
      in >> j;
      out.push_back(j.get<SampleRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed-sample", f.string() + ": " + e.what());
    }
  }
  return out;
}

ImageEmbedding encoder_embedding(const PatchEncoder& encoder) {
  return [&encoder](const GrayImage& image) {
    const auto g = encode_sketch(image, encoder).global.to(torch::kFloat64).contiguous();
    return std::vector<double>(g.data_ptr<double>(), g.data_ptr<double>() + g.numel());
  };
}

Histogram make_histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw Error("invalid-config", "histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  for (double v : values) h.hi = std::max(h.hi, v);
  if (h.hi <= h.lo) h.hi = h.lo + 1e-12;
  for (double v : values) {
    const int b = std::clamp(static_cast<int>((v - h.lo) / (h.hi - h.lo) * bins), 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

nlohmann::json metric_conventions() {
  return {{"sketch_cd", "non-white pixels as points in [0,1]^2, mean of min squared distance, both directions summed"},
          {"chamfer", "mean of min squared distance, both directions averaged then summed"},
          {"emd", "mean matched Euclidean distance, equal-size subsamples"},
          {"voxel_iou", "coarse shell occupancy"},
          {"clip_score", "100 x cosine of encoder global tokens"},
          {"fid", "per-view Frechet distance of shading features averaged over Fibonacci views"},
          {"cov_mmd_1nna", "chamfer set distance, ties to the lower index"}};
}

namespace {

PointSet subsample(const PointSet& p, size_t n, uint64_t seed) {
  if (p.size() <= n) return p;
  PointSet out = p;
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  out.resize(n);
  return out;
}

void write_reports(const RunLayout& run, const std::string& name, const nlohmann::json& report) {
  std::filesystem::create_directories(run.reports());
  std::ofstream js(run.reports() / (name + ".json"));
  js << report.dump(2) << "\n";
  std::ofstream csv(run.reports() / (name + ".csv"));
  csv << "metric,value\n";
  for (const auto& m : report.at("metrics")) csv << m.at("metric").get<std::string>() << "," << m.at("value") << "\n";
}

nlohmann::json metric_entry(const std::string& name, double value, const nlohmann::json& extra = {}) {
  nlohmann::json m = {{"metric", name}, {"value", value}};
  if (!extra.is_null()) m.update(extra);
  return m;
}

}  // namespace

nlohmann::json evaluate_run(const std::filesystem::path& run_dir, Protocol protocol, const EvaluationOptions& opts) {
  const RunLayout run{run_dir};
  const auto samples = read_samples(run);
  if (samples.empty()) throw Error("missing-pairs", "no generated samples under " + run.samples().string());
  nlohmann::json report = {{"protocol", to_string(protocol)},
                           {"conventions", metric_conventions()},
                           {"seeds", {{"points", opts.seed}}},
                           {"sample_count", samples.size()},
                           {"metrics", nlohmann::json::array()},
                           {"warnings", nlohmann::json::array()}};
  std::vector<TriangleMesh> gen;
  for (const auto& s : samples) gen.push_back(import_obj(run_dir / s.mesh));

  if (protocol == Protocol::sketch) {
    RandomPatchEncoder encoder;
    const auto embed = encoder_embedding(encoder);
    double clip = 0, scd = 0, cd = 0, em = 0, iou = 0;
    size_t n_iou = 0;
    std::string emd_method;
    nlohmann::json per = nlohmann::json::array();
    for (size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (s.sketch.empty() || s.reference_mesh.empty())
        throw Error("missing-pairs", "sample " + s.name + " has no paired sketch/reference");
      const auto input = read_png(run_dir / s.sketch);
      const auto ref = import_obj(run_dir / s.reference_mesh);
      nlohmann::json row = {{"name", s.name}};
      if (gen[i].empty()) {
        report["warnings"].push_back(s.name + ": empty mesh");
        continue;
      }
      const auto rendered = sketch_of({gen[i]}, s.true_view);
      row["clip_score"] = clip_score(input, rendered, embed);
      try {
        row["sketch_cd"] = sketch_cd(input, rendered);
      } catch (const Error& e) {
        report["warnings"].push_back(s.name + ": " + e.code());
        continue;
      }
      const auto pg = sample_surface_points(gen[i], opts.points, opts.seed);
      const auto pr = sample_surface_points(ref, opts.points, opts.seed);
      row["chamfer"] = chamfer(pg, pr);
      const auto e = emd(subsample(pg, opts.emd_points, opts.seed), subsample(pr, opts.emd_points, opts.seed + 1));
      row["emd"] = e.value;
      emd_method = e.method;
      if (!s.occupancy.empty() && !s.reference_occupancy.empty()) {
        const auto a = std::get<DenseField3D>(read_field(run_dir / s.occupancy));
        const auto b = std::get<DenseField3D>(read_field(run_dir / s.reference_occupancy));
        row["voxel_iou"] = voxel_iou(a, b);
        iou += row["voxel_iou"].get<double>();
        ++n_iou;
      }
      clip += row["clip_score"].get<double>();
      scd += row["sketch_cd"].get<double>();
      cd += row["chamfer"].get<double>();
      em += e.value;
      per.push_back(row);
    }
    const double n = std::max<size_t>(1, per.size());
    auto& m = report["metrics"];
    m.push_back(metric_entry("clip_score", clip / n, {{"extractor_id", encoder.id()}}));
    m.push_back(metric_entry("sketch_cd", scd / n));
    m.push_back(metric_entry("chamfer", cd / n, {{"points", opts.points}}));
    m.push_back(metric_entry("emd", em / n, {{"points", opts.emd_points}, {"method", emd_method}}));
    if (n_iou) m.push_back(metric_entry("voxel_iou", iou / n_iou));
    report["per_sample"] = per;
    report["extractor_id"] = encoder.id();
  } else {
    const auto ref_dir = run_dir / "reference";
    std::vector<std::filesystem::path> files;
    if (std::filesystem::exists(ref_dir))
      for (const auto& e : std::filesystem::directory_iterator(ref_dir))
        if (e.path().extension() == ".obj") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.size() < 2 || gen.size() < 2)
      throw Error("missing-pairs", "category protocol needs at least two generated and two reference meshes");
    std::vector<TriangleMesh> ref;
    for (const auto& f : files) ref.push_back(import_obj(f));
    const auto extractor = conv_feature_stub();
    const auto fid = shading_fid(gen, ref, extractor);
    for (const auto& w : fid.warnings) report["warnings"].push_back(w);
    std::vector<PointSet> pg, pr;
    for (const auto& g : gen) pg.push_back(sample_surface_points(g, opts.points, opts.seed));
    for (const auto& r : ref) pr.push_back(sample_surface_points(r, opts.points, opts.seed));
    const auto cov = cov_mmd_1nna(pg, pr, SetMetric::chamfer);
    std::vector<double> nearest;
    for (const auto& p : pg) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& r : pr) best = std::min(best, chamfer(p, r));
      nearest.push_back(best);
    }
    const auto hist = make_histogram(nearest, opts.histogram_bins);
    auto& m = report["metrics"];
    m.push_back(metric_entry("fid", fid.value, {{"extractor_id", fid.extractor_id}, {"views", 20}}));
    m.push_back(metric_entry("cov", cov.cov));
    m.push_back(metric_entry("mmd", cov.mmd));
    m.push_back(metric_entry("1nna", cov.nna));
    report["extractor_id"] = fid.extractor_id;
    report["retrieval_histogram"] = {{"lo", hist.lo}, {"hi", hist.hi}, {"counts", hist.counts}};
    report["reference_count"] = ref.size();
  }
  write_reports(run, to_string(protocol), report);
  return report;
}

}  // namespace lasdiff
