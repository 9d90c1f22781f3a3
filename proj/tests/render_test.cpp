#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lasdiff/error.hpp"
#include "lasdiff/render.hpp"

#if LASDIFF_HAVE_OPENCV
#include <opencv2/imgproc.hpp>
#endif

using namespace lasdiff;

namespace {

GrayImage square_image(int size, int lo, int hi, uint8_t inside = 0) {
  GrayImage img(size, size, 255);
  for (int y = lo; y < hi; ++y)
    for (int x = lo; x < hi; ++x) img.at(x, y) = inside;
  return img;
}

int count_value(const GrayImage& img, uint8_t v) {
  int n = 0;
  for (auto p : img.pixels) n += p == v;
  return n;
}

}  // namespace

TEST(Render, EmptySceneIsWhite) {
  const auto img = render_scene({}, predefined_view("front"));
  EXPECT_EQ(img.width, 224);
  EXPECT_EQ(count_value(img, 255), 224 * 224);
  EXPECT_THROW(render_shading(TriangleMesh{}, predefined_view("front")), Error);
}

TEST(Render, SphereIsMirrorSymmetricInFrontView) {
  const auto img = render_shading(make_icosphere(0.6, 4), predefined_view("front"));
  int covered = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      covered += img.at(x, y) < 255;
      EXPECT_LE(std::abs(int(img.at(x, y)) - int(img.at(img.width - 1 - x, y))), 2) << x << "," << y;
    }
  }
  EXPECT_GT(covered, 1000);
}

TEST(Render, ShadingStaysOnRamp) {
  const auto img = render_shading(make_box({-0.4, -0.4, -0.4}, {0.4, 0.4, 0.4}), predefined_view("side-left"));
  for (auto p : img.pixels) {
    if (p == 255) continue;
    EXPECT_GE(p, kShadeDark - 1);
    EXPECT_LE(p, kShadeDark + kShadeRange + 1);
  }
}

TEST(Render, Deterministic) {
  const auto mesh = make_torus(0.5, 0.2, 32, 16);
  EXPECT_EQ(render_shading(mesh, predefined_view("right")), render_shading(mesh, predefined_view("right")));
}

TEST(Render, SilhouetteMatchesProjectedDiskArea) {
  const double r = 0.5;
  const auto sil = render_silhouette(make_icosphere(r, 5), predefined_view("front"));
  int n = 0;
  for (auto s : sil) n += s;
  // sphere at distance d seen under half-angle asin(r/d)
  const double f = 112.0 / std::tan(22.5 * M_PI / 180);
  const double radius_px = f * std::tan(std::asin(r / 2.5));
  EXPECT_NEAR(n, M_PI * radius_px * radius_px, 0.03 * M_PI * radius_px * radius_px);
}

TEST(Canny, ConstantImageHasNoEdges) {
  const auto out = canny_sketch(GrayImage(64, 64, 128));
  EXPECT_EQ(count_value(out, 255), 64 * 64);
}

TEST(Canny, OutputIsBinary) {
  const auto out = canny_sketch(render_shading(make_torus(0.5, 0.2, 32, 16), predefined_view("side-right")));
  EXPECT_EQ(count_value(out, 0) + count_value(out, 255), int(out.pixels.size()));
  EXPECT_GT(count_value(out, 0), 100);
}

TEST(Canny, SquareOutlineStaysNearBoundary) {
  const auto out = canny_sketch(square_image(64, 16, 48));
  int edges = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (out.at(x, y) != 0) continue;
      ++edges;
      const int dx = std::min(std::abs(x - 16), std::abs(x - 47));
      const int dy = std::min(std::abs(y - 16), std::abs(y - 47));
      EXPECT_LE(std::min(dx, dy), 1) << x << "," << y;
    }
  }
  EXPECT_GT(edges, 4 * 28);
}

#if LASDIFF_HAVE_OPENCV
TEST(Canny, AgreesWithReferenceImplementation) {
  std::vector<GrayImage> inputs{square_image(64, 16, 48),
                                render_shading(make_icosphere(0.6, 4), predefined_view("front")),
                                render_shading(make_box({-0.4, -0.3, -0.5}, {0.4, 0.3, 0.5}), predefined_view("side-left"))};
  for (const auto& in : inputs) {
    const auto ours = canny_sketch(in);
    cv::Mat src(in.height, in.width, CV_8UC1, const_cast<uint8_t*>(in.pixels.data()));
    cv::Mat blurred, edges;
    cv::GaussianBlur(src, blurred, cv::Size(9, 9), 1.4, 1.4, cv::BORDER_REFLECT_101);
    cv::Canny(blurred, edges, 50, 150, 3, true);
    // every reference edge pixel has one of ours within 1 px, and vice versa
    auto near = [&](auto has, int x, int y) {
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int u = x + dx, v = y + dy;
          if (u >= 0 && v >= 0 && u < in.width && v < in.height && has(u, v)) return true;
        }
      return false;
    };
    auto ref_has = [&](int x, int y) { return edges.at<uint8_t>(y, x) != 0; };
    auto ours_has = [&](int x, int y) { return ours.at(x, y) == 0; };
    int ref_count = 0, miss_ref = 0, ours_count = 0, miss_ours = 0;
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        if (ref_has(x, y)) {
          ++ref_count;
          miss_ref += !near(ours_has, x, y);
        }
        if (ours_has(x, y)) {
          ++ours_count;
          miss_ours += !near(ref_has, x, y);
        }
      }
    }
    EXPECT_GT(ref_count, 0);
    EXPECT_LE(miss_ref, ref_count / 50);
    EXPECT_LE(miss_ours, ours_count / 50);
  }
}
#endif
