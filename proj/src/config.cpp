#include "lasdiff/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>

#include "lasdiff/error.hpp"

namespace lasdiff {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StageOptimizer, name, lr, weight_decay, epochs, batch)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SamplerConfig, steps, guidance, ddim, dilate)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DataConfig, dataset, toy_shapes, toy_seed, augment, perturbations)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ServiceConfig, host, port, cors_origin, queue_depth)

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"coarse", c.coarse},
       {"fine", c.fine},
       {"shell_threshold", c.shell_threshold},
       {"occupancy_net", c.occupancy_net},
       {"sdf_net", c.sdf_net},
       {"self_cond_probability", c.self_cond_probability},
       {"cond_dropout", c.cond_dropout},
       {"sampler", c.sampler},
       {"occupancy_opt", c.occupancy_opt},
       {"sdf_opt", c.sdf_opt},
       {"data", c.data},
       {"service", c.service},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  RunConfig d = default_config(j.value("coarse", 16));
  c = d;
  c.fine = j.value("fine", d.fine);
  c.shell_threshold = j.value("shell_threshold", d.shell_threshold);
  if (j.contains("occupancy_net")) c.occupancy_net = j.at("occupancy_net").get<DenseUNetConfig>();
  if (j.contains("sdf_net")) c.sdf_net = j.at("sdf_net").get<SparseUNetConfig>();
  c.self_cond_probability = j.value("self_cond_probability", d.self_cond_probability);
  c.cond_dropout = j.value("cond_dropout", d.cond_dropout);
  if (j.contains("sampler")) c.sampler = j.at("sampler").get<SamplerConfig>();
  if (j.contains("occupancy_opt")) c.occupancy_opt = j.at("occupancy_opt").get<StageOptimizer>();
  if (j.contains("sdf_opt")) c.sdf_opt = j.at("sdf_opt").get<StageOptimizer>();
  if (j.contains("data")) c.data = j.at("data").get<DataConfig>();
  if (j.contains("service")) c.service = j.at("service").get<ServiceConfig>();
  c.seed = j.value("seed", d.seed);
}

RunConfig default_config(int coarse) {
  RunConfig c;
  c.coarse = coarse;
  c.fine = 2 * coarse;
  c.occupancy_net.levels = {{coarse, 16}, {coarse / 2, 32}, {coarse / 4, 64}};
  c.occupancy_net.attention_levels = {coarse / 2, coarse / 4};
  c.sdf_net.levels = {{2 * coarse, 16}, {coarse, 32}, {coarse / 2, 64}};
  return c;
}

void RunConfig::validate() const {
  if (coarse < 4 || fine != 2 * coarse) throw Error("invalid-config", "fine resolution must be twice the coarse one");
  if (occupancy_net.resolution() != coarse) throw Error("invalid-config", "occupancy network resolution != coarse");
  if (sdf_net.resolution() != fine) throw Error("invalid-config", "sdf network resolution != fine");
  occupancy_net.validate();
  sdf_net.validate();
  if (self_cond_probability < 0 || self_cond_probability > 1) throw Error("invalid-config", "self_cond_probability");
  if (cond_dropout < 0 || cond_dropout > 1) throw Error("invalid-config", "cond_dropout");
  if (sampler.steps < 1) throw Error("invalid-config", "sampler.steps");
  for (const auto* o : {&occupancy_opt, &sdf_opt}) {
    if (o->name != "adam" && o->name != "adamw") throw Error("invalid-config", "optimizer " + o->name);
    if (o->lr <= 0 || o->epochs < 0 || o->batch < 1) throw Error("invalid-config", "optimizer settings");
  }
}

namespace {

std::string env_key(const std::string& path) {
  std::string k = "LAS_";
  for (char ch : path) k += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return k;
}

void override_leaves(nlohmann::json& node, const std::string& path,
                     const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  if (node.is_object()) {
    for (auto& [key, child] : node.items()) override_leaves(child, path.empty() ? key : path + "." + key, getenv);
    return;
  }
  const auto value = getenv(env_key(path));
  if (!value) return;
  auto parsed = nlohmann::json::parse(*value, nullptr, false);
  node = parsed.is_discarded() ? nlohmann::json(*value) : parsed;
}

}  // namespace

nlohmann::json apply_env_overrides(nlohmann::json j,
                                   const std::function<std::optional<std::string>(const std::string&)>& getenv) {
  override_leaves(j, "", getenv);
  return j;
}

nlohmann::json apply_env_overrides(nlohmann::json j) {
  return apply_env_overrides(std::move(j), [](const std::string& k) -> std::optional<std::string> {
    const char* v = std::getenv(k.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  });
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid-config", e.what());
  }
  // fill defaults first so every key can be overridden from the environment
  nlohmann::json full = j.get<RunConfig>();
  auto cfg = apply_env_overrides(full).get<RunConfig>();
  cfg.validate();
  return cfg;
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("io-error", path.string());
  out << nlohmann::json(config).dump(2) << "\n";
}

}  // namespace lasdiff
