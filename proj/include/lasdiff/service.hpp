#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lasdiff/pipeline.hpp"

namespace lasdiff {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 binds any free port
  std::string cors_origin = "*";
  size_t queue_depth = 16;
  std::filesystem::path run_dir;  // meshes go to run_dir/jobs/<id>/ when set
  SamplerConfig sampler;          // defaults for requests that omit steps/guidance
  nlohmann::json checkpoints = nlohmann::json::object();  // reported by /health
};

enum class JobStatus { queued, running, done, failed };
std::string to_string(JobStatus s);

struct JobResult {
  uint64_t seed = 0;
  std::string obj;  // mesh text
  std::vector<std::array<int, 3>> occupied;  // stage-1 coarse cells
  int resolution = 0;
  std::vector<std::string> warnings;
  std::string error;
  double seconds = 0;
};

/// Generation jobs over HTTP with a single model worker and a bounded FIFO.
///   POST /generate /generate_category /stitch -> 202 {job_id}
///   GET /jobs/{id}, /jobs/{id}/mesh/{k}.obj, /jobs/{id}/occupancy/{k}
///   GET /views, /health
class GenerationService {
 public:
  /// `models` may be null: generation endpoints then answer 503.
  GenerationService(ServiceOptions options, std::shared_ptr<Models> models,
                    std::shared_ptr<const PatchEncoder> encoder = nullptr);
  ~GenerationService();
  GenerationService(const GenerationService&) = delete;
  GenerationService& operator=(const GenerationService&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Blocks until stop() or until `interrupt` becomes true.
  void wait(const std::atomic<bool>* interrupt = nullptr);
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Parses a region: a half name or a 16x16 mask (nested rows or flat list of
/// 0/1 or booleans). Throws Error("invalid-region").
std::vector<uint8_t> parse_region(const nlohmann::json& region, const PatchLayout& layout = {});

}  // namespace lasdiff
