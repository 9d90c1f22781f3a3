#include "lasdiff/nn.hpp"

#include <cmath>
#include <numeric>

#include "lasdiff/error.hpp"

namespace lasdiff {

int group_count(int channels) { return std::gcd(8, channels); }

torch::Tensor sinusoidal_features(const torch::Tensor& positions, int frequencies) {
  auto opts = torch::TensorOptions().dtype(positions.dtype()).device(positions.device());
  auto k = torch::arange(frequencies, opts);
  auto freq = torch::exp(-std::log(10000.0) * k / frequencies);
  auto arg = positions.unsqueeze(-1) * freq;
  return torch::cat({torch::sin(arg), torch::cos(arg)}, -1);
}

Adam::Adam(std::vector<torch::Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adam::step() {
  torch::NoGradGuard guard;
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1 - std::pow(b2, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    auto g = p.grad();
    if (options_.weight_decay != 0) {
      if (options_.decoupled) {
        p.mul_(1 - options_.lr * options_.weight_decay);
      } else {
        g = g + options_.weight_decay * p;
      }
    }
    m_[i].mul_(b1).add_(g, 1 - b1);
    v_[i].mul_(b2).addcmul_(g, g, 1 - b2);
    auto denom = (v_[i] / c2).sqrt_().add_(options_.eps);
    p.addcdiv_(m_[i], denom, -options_.lr / c1);
  }
}

TimeEmbeddingImpl::TimeEmbeddingImpl(int dim) : dim_(dim) {
  if (dim < 2 || dim % 2 != 0) throw Error("invalid-config", "time embedding width must be even");
  l1_ = register_module("l1", torch::nn::Linear(dim, dim));
  l2_ = register_module("l2", torch::nn::Linear(dim, dim));
}

torch::Tensor TimeEmbeddingImpl::forward(const torch::Tensor& t) {
  auto e = sinusoidal_features(t * 1000.0, dim_ / 2);
  return l2_(torch::silu(l1_(e)));
}

AdamOptions adam_options(const std::string& name, double lr, double weight_decay) {
  AdamOptions o;
  o.lr = lr;
  if (name == "adam") return o;
  if (name == "adamw") {
    o.decoupled = true;
    o.weight_decay = weight_decay;
    return o;
  }
  throw Error("invalid-config", "unknown optimizer " + name);
}

}  // namespace lasdiff
