#pragma once

#include <torch/torch.h>

#include <memory>
#include <vector>

#include "lasdiff/conditioning.hpp"

namespace lasdiff {

/// exp(-10 t^2 - 1e-4). Throws Error("time-out-of-range") outside [0,1].
double gamma(double t);
torch::Tensor gamma(const torch::Tensor& t);

/// sqrt(gamma) x0 + sqrt(1 - gamma) eps; `t` broadcasts against x0.
torch::Tensor forward_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps);
torch::Tensor forward_sample(const torch::Tensor& x0, double t, const torch::Tensor& eps);

/// uncond + w (cond - uncond).
torch::Tensor cfg_combine(const torch::Tensor& pred_cond, const torch::Tensor& pred_uncond, double w);

enum class PayloadKind { sdf, occupancy };

struct SparseStructure;

/// Batch geometry of a payload tensor. Dense payloads are [B,1,N,N,N];
/// sparse payloads are [M] values with a row -> sample index.
struct Layout {
  int64_t batch = 1;
  torch::Tensor batch_index;
  std::shared_ptr<const SparseStructure> sparse;

  bool is_sparse() const { return batch_index.defined(); }
  /// Broadcasts one value per sample to the payload shape of `like`.
  torch::Tensor per_element(const torch::Tensor& per_sample, const torch::Tensor& like) const;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  /// Predicts x0 from (x_t, self-conditioning estimate, per-sample t).
  virtual torch::Tensor predict(const torch::Tensor& x_t, const torch::Tensor& self_cond, const torch::Tensor& t,
                                const Conditioning& cond, const Layout& layout) = 0;
};

struct TrainingOptions {
  double self_cond_probability = 0.5;
  double cond_dropout = 0.1;
};

/// Random quantities of one training step, drawn up front so a step can be replayed.
struct TrainingDraw {
  torch::Tensor t;       // [B]
  torch::Tensor eps;     // payload shape
  bool self_condition = false;
  torch::Tensor drop;    // [B] bool, condition replaced by null
};

TrainingDraw draw_training(const torch::Tensor& x0, const Layout& layout, const TrainingOptions& options,
                           torch::Generator& gen);

/// MSE between denoiser(x_t, x~0, t, cond) and x0. x~0 comes from a
/// no-grad pass with a zero self-conditioning input when the draw asks for it.
torch::Tensor training_loss(Denoiser& denoiser, const torch::Tensor& x0, const Conditioning& cond,
                            const Layout& layout, const TrainingDraw& draw);

torch::Tensor training_step(Denoiser& denoiser, const torch::Tensor& x0, const Conditioning& cond,
                            const Layout& layout, const TrainingOptions& options, torch::Generator& gen);

struct SamplerOptions {
  int steps = 50;
  double guidance = 1.0;
  PayloadKind payload = PayloadKind::occupancy;
  bool ddim = false;
};

/// Ancestral sampling on the grid t_i = i / steps with abar_i = gamma(t_i),
/// x0-prediction clamped to the payload range; returns the last x0 estimate.
torch::Tensor ddpm_sample(Denoiser& denoiser, torch::IntArrayRef shape, const Conditioning& cond,
                          const Layout& layout, const SamplerOptions& options, torch::Generator& gen,
                          torch::Dtype dtype = torch::kFloat32);

torch::Generator make_generator(uint64_t seed);

}  // namespace lasdiff
