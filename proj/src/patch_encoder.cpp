#include "lasdiff/patch_encoder.hpp"

#include <cmath>
#include <random>

#include "lasdiff/diffusion.hpp"
#include "lasdiff/error.hpp"

namespace lasdiff {

RandomPatchEncoder::RandomPatchEncoder(int dim, uint64_t seed, PatchLayout layout)
    : dim_(dim), seed_(seed), layout_(layout) {
  auto gen = make_generator(seed);
  const int64_t pixels = static_cast<int64_t>(layout.patch_width) * layout.patch_width;
  w_patch_ = torch::randn({pixels, dim}, gen, torch::kFloat32) * (3.0 / std::sqrt(static_cast<double>(pixels)));
  b_patch_ = torch::randn({dim}, gen, torch::kFloat32) * 0.1;
  w_global_ = torch::randn({2 * dim, dim}, gen, torch::kFloat32) / std::sqrt(2.0 * dim);
}

std::string RandomPatchEncoder::id() const {
  return "random-patch-" + std::to_string(dim_) + "-seed" + std::to_string(seed_);
}

PatchGrid RandomPatchEncoder::encode(const GrayImage& image) const {
  torch::NoGradGuard no_grad;
  const int s = layout_.image_size, pw = layout_.patch_width, n = layout_.per_side();
  auto img = torch::from_blob(const_cast<uint8_t*>(image.pixels.data()), {s, s}, torch::kUInt8).to(torch::kFloat32);
  auto ink = 1.0 - img / 255.0;
  auto patches = ink.view({n, pw, n, pw}).permute({0, 2, 1, 3}).reshape({n * n, pw * pw});
  PatchGrid g;
  g.layout = layout_;
  g.features = torch::tanh(patches.mm(w_patch_) + b_patch_);
  auto pooled = torch::cat({g.features.mean(0), std::get<0>(g.features.max(0))});
  g.global = torch::tanh(pooled.matmul(w_global_));
  return g;
}

PatchGrid encode_sketch(const GrayImage& image, const PatchEncoder& encoder) {
  const auto layout = encoder.layout();
  if (image.width != layout.image_size || image.height != layout.image_size)
    throw Error("image-size-mismatch", std::to_string(image.width) + "x" + std::to_string(image.height));
  return encoder.encode(image);
}

PatchGrid stitch_patch_features(const PatchGrid& a, const PatchGrid& b, const std::vector<uint8_t>& region) {
  if (!(a.layout == b.layout) || !a.features.sizes().equals(b.features.sizes()) ||
      static_cast<int64_t>(region.size()) != a.features.size(0))
    throw Error("geometry-mismatch");
  PatchGrid out = a;
  auto take_b = torch::tensor(std::vector<int64_t>(region.begin(), region.end()), torch::kLong).to(torch::kBool);
  out.features = torch::where(take_b.unsqueeze(1), b.features, a.features);
  return out;
}

std::vector<uint8_t> half_region(const std::string& name, const PatchLayout& layout) {
  const int n = layout.per_side();
  std::vector<uint8_t> r(static_cast<size_t>(n) * n, 0);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      bool on;
      if (name == "top") on = row < n / 2;
      else if (name == "bottom") on = row >= n / 2;
      else if (name == "left") on = col < n / 2;
      else if (name == "right") on = col >= n / 2;
      else throw Error("invalid-region", name);
      r[row * n + col] = on;
    }
  }
  return r;
}

torch::Tensor category_embedding(const std::string& name, int dim) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
  auto gen = make_generator(h);
  auto e = torch::randn({dim}, gen, torch::kFloat32);
  return e / e.norm();
}

}  // namespace lasdiff
