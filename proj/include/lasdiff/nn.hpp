#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace lasdiff {

/// gcd(8, channels): eight groups whenever the width allows it.
int group_count(int channels);

/// [N] positions -> [N, 2 * frequencies] of sin/cos pairs with geometric
/// frequencies 1 / 10000^(k / frequencies).
torch::Tensor sinusoidal_features(const torch::Tensor& positions, int frequencies);

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0;
  bool decoupled = false;  // AdamW
};

/// Adam / AdamW with explicit state so checkpoints can carry it.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, AdamOptions options);

  void zero_grad();
  void step();

  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  int64_t steps() const { return steps_; }
  void set_steps(int64_t s) { steps_ = s; }
  std::vector<torch::Tensor>& first_moments() { return m_; }
  std::vector<torch::Tensor>& second_moments() { return v_; }
  const std::vector<torch::Tensor>& params() const { return params_; }

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_;
  std::vector<torch::Tensor> v_;
  AdamOptions options_;
  int64_t steps_ = 0;
};

/// Sinusoid of t * 1000 at dim / 2 frequencies followed by a two-layer MLP.
class TimeEmbeddingImpl : public torch::nn::Module {
 public:
  explicit TimeEmbeddingImpl(int dim);
  torch::Tensor forward(const torch::Tensor& t);  // [B] -> [B, dim]
  int dim() const { return dim_; }

 private:
  int dim_;
  torch::nn::Linear l1_{nullptr}, l2_{nullptr};
};
TORCH_MODULE(TimeEmbedding);

AdamOptions adam_options(const std::string& name, double lr, double weight_decay = 0.01);

}  // namespace lasdiff
