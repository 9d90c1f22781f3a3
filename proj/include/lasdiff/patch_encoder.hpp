#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lasdiff/camera.hpp"
#include "lasdiff/image.hpp"

namespace lasdiff {

/// Per-patch features of one image plus its global token.
struct PatchGrid {
  PatchLayout layout;
  torch::Tensor features;  // [P, D]
  torch::Tensor global;    // [D]
};

/// Frozen image encoder producing patch features.
class PatchEncoder {
 public:
  virtual ~PatchEncoder() = default;
  virtual PatchGrid encode(const GrayImage& image) const = 0;
  virtual int feature_dim() const = 0;
  virtual PatchLayout layout() const = 0;
  virtual std::string id() const = 0;
};

/// Fixed-seed random patch embedder: each 14x14 patch (ink = 1 - pixel) goes
/// through a random linear map and tanh; the global token is a second random
/// map of the mean and max pooled patch features.
class RandomPatchEncoder : public PatchEncoder {
 public:
  explicit RandomPatchEncoder(int dim = 64, uint64_t seed = 11, PatchLayout layout = {});
  PatchGrid encode(const GrayImage& image) const override;
  int feature_dim() const override { return dim_; }
  PatchLayout layout() const override { return layout_; }
  std::string id() const override;

 private:
  int dim_;
  uint64_t seed_;
  PatchLayout layout_;
  torch::Tensor w_patch_, b_patch_, w_global_;
};

/// Throws Error("image-size-mismatch") when the image does not match the encoder.
PatchGrid encode_sketch(const GrayImage& image, const PatchEncoder& encoder);

/// Feature j from `b` where region[j], else from `a`. Throws Error("geometry-mismatch").
PatchGrid stitch_patch_features(const PatchGrid& a, const PatchGrid& b, const std::vector<uint8_t>& region);

/// top / bottom / left / right halves of the patch grid. Throws Error("invalid-region").
std::vector<uint8_t> half_region(const std::string& name, const PatchLayout& layout = {});

/// Deterministic unit-norm class-name embedding (stands in for a text encoder).
torch::Tensor category_embedding(const std::string& name, int dim = 64);

}  // namespace lasdiff
