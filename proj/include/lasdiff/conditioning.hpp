#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace lasdiff {

enum class CondKind { none, sketch, category };

/// How sketch patch features reach the dense U-Net.
enum class AttentionMode { view_aware_local, global, view_agnostic };

std::string to_string(CondKind kind);
std::string to_string(AttentionMode mode);
CondKind cond_kind_from_string(const std::string& s);
AttentionMode attention_mode_from_string(const std::string& s);

/// Batched condition. Samples flagged in `null_mask` use the network's
/// learned null condition instead of their features (guidance dropout).
struct Conditioning {
  CondKind kind = CondKind::none;
  torch::Tensor patches;    // [B, P, D] sketch patch features
  torch::Tensor global;     // [B, D] global token or class embedding
  torch::Tensor null_mask;  // [B] bool
  std::vector<int> views;   // predefined view index per sample (sketch)

  int64_t batch() const;
  bool is_null(int64_t b) const;
  /// Same condition with `drop` samples switched to the null condition.
  Conditioning with_null(const torch::Tensor& drop) const;
  Conditioning all_null() const;
  /// Repeats each sample `times` times in place (b0 b0 b1 b1 ...).
  Conditioning repeat_interleave(int64_t times) const;
  Conditioning select(const std::vector<int64_t>& rows) const;
  Conditioning to(torch::Dtype dtype) const;
};

}  // namespace lasdiff
