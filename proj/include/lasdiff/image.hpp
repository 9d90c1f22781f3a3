#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lasdiff {

/// 8-bit grayscale image, row-major, 255 = white.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

std::vector<uint8_t> encode_png(const GrayImage& image);
/// Decodes any PNG color type to 8-bit grayscale. Throws Error("invalid-image").
GrayImage decode_png(std::span<const uint8_t> bytes);

void write_png(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_png(const std::filesystem::path& path);

/// Bilinear resampling to the requested size.
GrayImage resize(const GrayImage& image, int width, int height);

std::string base64_encode(std::span<const uint8_t> bytes);
/// Throws Error("invalid-base64").
std::vector<uint8_t> base64_decode(std::string_view text);

}  // namespace lasdiff
