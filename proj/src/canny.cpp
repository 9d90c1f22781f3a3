#include <algorithm>
#include <cmath>
#include <vector>

#include "lasdiff/render.hpp"

namespace lasdiff {
namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int ksize = static_cast<int>(std::lround(sigma * 6 + 1)) | 1;
  const int r = ksize / 2;
  std::vector<double> k(ksize);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-(i * i) / (2 * sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

GrayImage canny_sketch(const GrayImage& image, const CannyOptions& options) {
  const int w = image.width, h = image.height;
  GrayImage out(w, h, 255);
  if (w < 3 || h < 3) return out;

  // Separable blur, rounded back to 8 bits like a standard 8-bit pipeline.
  const auto kernel = gaussian_kernel(options.sigma);
  const int r = static_cast<int>(kernel.size()) / 2;
  std::vector<double> tmp(static_cast<size_t>(w) * h);
  std::vector<int> blurred(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += kernel[i + r] * image.at(reflect101(x + i, w), y);
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) acc += kernel[i + r] * tmp[static_cast<size_t>(reflect101(y + i, h)) * w + x];
      blurred[static_cast<size_t>(y) * w + x] = static_cast<int>(std::lround(acc));
    }
  }

  auto px = [&](int x, int y) { return blurred[static_cast<size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)]; };
  std::vector<double> mag(static_cast<size_t>(w) * h, 0.0);
  std::vector<int> gx(mag.size()), gy(mag.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int dx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                     (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const int dy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                     (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      const size_t idx = static_cast<size_t>(y) * w + x;
      gx[idx] = dx;
      gy[idx] = dy;
      mag[idx] = std::sqrt(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy);
    }
  }

  // 0 = none, 1 = weak, 2 = strong
  std::vector<uint8_t> label(mag.size(), 0);
  const double tan22 = std::tan(22.5 * M_PI / 180.0);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      const double m = mag[idx];
      if (m <= options.low_threshold) continue;
      const double ax = std::abs(gx[idx]), ay = std::abs(gy[idx]);
      double m1, m2;
      if (ay <= ax * tan22) {  // horizontal gradient
        m1 = mag[idx - 1];
        m2 = mag[idx + 1];
      } else if (ay > ax / tan22) {  // vertical gradient
        m1 = mag[idx - w];
        m2 = mag[idx + w];
      } else if ((gx[idx] > 0) == (gy[idx] > 0)) {
        m1 = mag[idx - w - 1];
        m2 = mag[idx + w + 1];
      } else {
        m1 = mag[idx - w + 1];
        m2 = mag[idx + w - 1];
      }
      if (m > m1 && m >= m2) label[idx] = m > options.high_threshold ? 2 : 1;
    }
  }

  std::vector<size_t> stack;
  for (size_t idx = 0; idx < label.size(); ++idx) {
    if (label[idx] == 2) stack.push_back(idx);
  }
  while (!stack.empty()) {
    const size_t idx = stack.back();
    stack.pop_back();
    out.pixels[idx] = 0;
    const int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const size_t n = static_cast<size_t>(ny) * w + nx;
        if (label[n] == 1) {
          label[n] = 2;
          stack.push_back(n);
        }
      }
    }
  }
  return out;
}

}  // namespace lasdiff
