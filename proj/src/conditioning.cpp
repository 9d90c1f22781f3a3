#include "lasdiff/conditioning.hpp"

#include "lasdiff/error.hpp"

namespace lasdiff {

std::string to_string(CondKind kind) {
  switch (kind) {
    case CondKind::none: return "none";
    case CondKind::sketch: return "sketch";
    case CondKind::category: return "category";
  }
  return "none";
}

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::view_aware_local: return "view_aware_local";
    case AttentionMode::global: return "global";
    case AttentionMode::view_agnostic: return "view_agnostic";
  }
  return "view_aware_local";
}

CondKind cond_kind_from_string(const std::string& s) {
  if (s == "none") return CondKind::none;
  if (s == "sketch") return CondKind::sketch;
  if (s == "category") return CondKind::category;
  throw Error("invalid-config", "unknown conditioning kind " + s);
}

AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "view_aware_local") return AttentionMode::view_aware_local;
  if (s == "global") return AttentionMode::global;
  if (s == "view_agnostic") return AttentionMode::view_agnostic;
  throw Error("invalid-config", "unknown attention mode " + s);
}

int64_t Conditioning::batch() const {
  if (null_mask.defined()) return null_mask.size(0);
  if (global.defined()) return global.size(0);
  if (patches.defined()) return patches.size(0);
  return 0;
}

bool Conditioning::is_null(int64_t b) const {
  if (kind == CondKind::none) return true;
  return null_mask.defined() && null_mask[b].item<bool>();
}

Conditioning Conditioning::with_null(const torch::Tensor& drop) const {
  Conditioning c = *this;
  if (kind == CondKind::none) return c;
  c.null_mask = null_mask.defined() ? torch::logical_or(null_mask, drop) : drop.clone();
  return c;
}

Conditioning Conditioning::all_null() const {
  Conditioning c = *this;
  if (kind == CondKind::none) return c;
  c.null_mask = torch::ones({batch()}, torch::kBool);
  return c;
}

Conditioning Conditioning::repeat_interleave(int64_t times) const {
  Conditioning c = *this;
  if (kind == CondKind::none) return c;
  if (patches.defined()) c.patches = patches.repeat_interleave(times, 0);
  if (global.defined()) c.global = global.repeat_interleave(times, 0);
  if (null_mask.defined()) c.null_mask = null_mask.repeat_interleave(times, 0);
  c.views.clear();
  for (int v : views)
    for (int64_t r = 0; r < times; ++r) c.views.push_back(v);
  return c;
}

Conditioning Conditioning::select(const std::vector<int64_t>& rows) const {
  Conditioning c = *this;
  if (kind == CondKind::none) return c;
  auto idx = torch::tensor(rows, torch::kLong);
  if (patches.defined()) c.patches = patches.index_select(0, idx);
  if (global.defined()) c.global = global.index_select(0, idx);
  if (null_mask.defined()) c.null_mask = null_mask.index_select(0, idx);
  if (!views.empty()) {
    c.views.clear();
    for (auto r : rows) c.views.push_back(views[r]);
  }
  return c;
}

Conditioning Conditioning::to(torch::Dtype dtype) const {
  Conditioning c = *this;
  if (patches.defined()) c.patches = patches.to(dtype);
  if (global.defined()) c.global = global.to(dtype);
  return c;
}

}  // namespace lasdiff
