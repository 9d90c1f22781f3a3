#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lasdiff/metrics.hpp"
#include "lasdiff/pipeline.hpp"

namespace lasdiff {

enum class Protocol { sketch, category };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

/// Sidecar of one generated sample under samples/<name>.json. Paths are
/// relative to the run directory.
struct SampleRecord {
  std::string name;
  uint64_t seed = 0;
  std::string mesh;       // samples/<name>.obj
  std::string occupancy;  // samples/<name>.occ.lasf
  std::string sketch;     // input sketch PNG (sketch protocol)
  std::string view;       // predefined view name
  CameraView true_view;   // camera the sketch was drawn from
  std::string reference_mesh;       // paired ground truth
  std::string reference_occupancy;  // paired ground-truth coarse shell
  std::string category;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const SampleRecord& r);
void from_json(const nlohmann::json& j, SampleRecord& r);

/// Writes mesh, occupancy and sidecar; fills record.mesh / record.occupancy.
void write_sample(const RunLayout& run, SampleRecord record, const Generation& g);
std::vector<SampleRecord> read_samples(const RunLayout& run);

struct EvaluationOptions {
  size_t points = 2048;
  uint64_t seed = 0;
  size_t emd_points = 512;  // EMD subsample, exact Hungarian when <= 256
  int histogram_bins = 10;
};

/// Sketch protocol: CLIPScore (embedding stub), Sketch-CD, CD, EMD and voxel
/// IOU against the paired references. Category protocol: shading FID,
/// COV/MMD/1-NNA and nearest-training-shape histogram against the meshes in
/// run_dir/reference/. Writes reports/<protocol>.json and .csv.
/// Throws Error("missing-pairs").
nlohmann::json evaluate_run(const std::filesystem::path& run_dir, Protocol protocol,
                            const EvaluationOptions& options = {});

/// Embedding used for CLIPScore: the global token of the patch encoder.
ImageEmbedding encoder_embedding(const PatchEncoder& encoder);

/// Fixed-width histogram over [0, max]; counts sum to values.size().
struct Histogram {
  double lo = 0, hi = 0;
  std::vector<size_t> counts;
};
Histogram make_histogram(const std::vector<double>& values, int bins);

/// Metric conventions embedded in every report.
nlohmann::json metric_conventions();

}  // namespace lasdiff
