#include "lasdiff/diffusion.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "lasdiff/error.hpp"

namespace lasdiff {

double gamma(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw Error("time-out-of-range", std::to_string(t));
  return std::exp(-10.0 * t * t - 1e-4);
}

torch::Tensor gamma(const torch::Tensor& t) {
  if (t.numel() > 0 && (t.min().item<double>() < 0.0 || t.max().item<double>() > 1.0))
    throw Error("time-out-of-range");
  return torch::exp(-10.0 * t * t - 1e-4);
}

torch::Tensor forward_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& eps) {
  if (!x0.sizes().equals(eps.sizes())) throw Error("shape-mismatch", "eps must match x0");
  auto g = gamma(t);
  return torch::sqrt(g) * x0 + torch::sqrt(1 - g) * eps;
}

torch::Tensor forward_sample(const torch::Tensor& x0, double t, const torch::Tensor& eps) {
  if (!x0.sizes().equals(eps.sizes())) throw Error("shape-mismatch", "eps must match x0");
  const double g = gamma(t);
  return std::sqrt(g) * x0 + std::sqrt(1 - g) * eps;
}

torch::Tensor cfg_combine(const torch::Tensor& pred_cond, const torch::Tensor& pred_uncond, double w) {
  if (!pred_cond.sizes().equals(pred_uncond.sizes())) throw Error("shape-mismatch", "guidance predictions");
  if (w == 1.0) return pred_cond;
  if (w == 0.0) return pred_uncond;
  return pred_uncond + w * (pred_cond - pred_uncond);
}

torch::Tensor Layout::per_element(const torch::Tensor& per_sample, const torch::Tensor& like) const {
  if (is_sparse()) {
    auto v = per_sample.index_select(0, batch_index);
    while (v.dim() < like.dim()) v = v.unsqueeze(-1);
    return v;
  }
  std::vector<int64_t> shape(like.dim(), 1);
  shape[0] = per_sample.size(0);
  return per_sample.view(shape);
}

torch::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

TrainingDraw draw_training(const torch::Tensor& x0, const Layout& layout, const TrainingOptions& options,
                           torch::Generator& gen) {
  TrainingDraw d;
  auto opts = torch::TensorOptions().dtype(x0.dtype());
  d.t = torch::rand({layout.batch}, gen, opts);
  d.eps = torch::randn(x0.sizes(), gen, opts);
  d.self_condition = torch::rand({1}, gen, torch::kDouble).item<double>() < options.self_cond_probability;
  d.drop = torch::rand({layout.batch}, gen, torch::kDouble) < options.cond_dropout;
  return d;
}

torch::Tensor training_loss(Denoiser& denoiser, const torch::Tensor& x0, const Conditioning& cond,
                            const Layout& layout, const TrainingDraw& draw) {
  const auto c = cond.kind == CondKind::none ? cond : cond.with_null(draw.drop);
  auto x_t = forward_sample(x0, layout.per_element(draw.t, x0), draw.eps);
  auto self_cond = torch::zeros_like(x0);
  if (draw.self_condition) {
    torch::NoGradGuard no_grad;
    self_cond = denoiser.predict(x_t, self_cond, draw.t, c, layout).detach();
  }
  auto pred = denoiser.predict(x_t, self_cond, draw.t, c, layout);
  return torch::mse_loss(pred, x0);
}

torch::Tensor training_step(Denoiser& denoiser, const torch::Tensor& x0, const Conditioning& cond,
                            const Layout& layout, const TrainingOptions& options, torch::Generator& gen) {
  return training_loss(denoiser, x0, cond, layout, draw_training(x0, layout, options, gen));
}

namespace {

torch::Tensor clamp_payload(const torch::Tensor& x, PayloadKind payload) {
  return payload == PayloadKind::sdf ? x.clamp(-1.0, 1.0) : x.clamp(0.0, 1.0);
}

}  // namespace

torch::Tensor ddpm_sample(Denoiser& denoiser, torch::IntArrayRef shape, const Conditioning& cond,
                          const Layout& layout, const SamplerOptions& options, torch::Generator& gen,
                          torch::Dtype dtype) {
  if (options.steps < 1) throw Error("invalid-steps", std::to_string(options.steps));
  torch::NoGradGuard no_grad;
  const auto opts = torch::TensorOptions().dtype(dtype);
  const bool guided = options.guidance != 1.0 && cond.kind != CondKind::none;
  const Conditioning uncond = cond.all_null();
  auto x = torch::randn(shape, gen, opts);
  auto x0 = torch::zeros_like(x);
  for (int i = options.steps; i >= 1; --i) {
    const double t = static_cast<double>(i) / options.steps;
    auto tt = torch::full({layout.batch}, t, opts);
    auto pred = denoiser.predict(x, x0, tt, cond, layout);
    if (guided) pred = cfg_combine(pred, denoiser.predict(x, x0, tt, uncond, layout), options.guidance);
    x0 = clamp_payload(pred, options.payload);
    if (i == 1) break;
    const double ab = gamma(t);
    const double ab_prev = gamma(static_cast<double>(i - 1) / options.steps);
    if (options.ddim) {
      auto eps = (x - std::sqrt(ab) * x0) / std::sqrt(1 - ab);
      x = std::sqrt(ab_prev) * x0 + std::sqrt(1 - ab_prev) * eps;
      continue;
    }
    const double alpha = ab / ab_prev;
    const double beta = 1 - alpha;
    const double c0 = std::sqrt(ab_prev) * beta / (1 - ab);
    const double ct = std::sqrt(alpha) * (1 - ab_prev) / (1 - ab);
    const double var = beta * (1 - ab_prev) / (1 - ab);
    x = c0 * x0 + ct * x + std::sqrt(var) * torch::randn(shape, gen, opts);
  }
  return x0;
}

}  // namespace lasdiff
