#include <gtest/gtest.h>

#include <cmath>

#include "fpsr/resample.hpp"

using namespace fpsr;

TEST(Resample, ExtentsAreExact) {
  EXPECT_EQ(scaled_extent(48, {4, 1}), 192);
  EXPECT_EQ(scaled_extent(7, {1, 2}), 4);
  EXPECT_EQ(scaled_extent(9, {2, 3}), 6);
  EXPECT_THROW(scaled_extent(9, {0, 1}), std::invalid_argument);
  ImageRGB img(10, 13);
  const auto up = bicubic_resize(img, {2, 1});
  EXPECT_EQ(up.height(), 20);
  EXPECT_EQ(up.width(), 26);
}

TEST(Resample, KernelShape) {
  EXPECT_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.5), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), cubic_kernel(-0.5));
  EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
}

TEST(Resample, RowsArePartitionsOfUnity) {
  for (auto [in, out] : {std::pair{10, 20}, std::pair{20, 10}, std::pair{9, 4}, std::pair{5, 40}}) {
    const auto w = bicubic_axis_weights(in, out, static_cast<double>(out) / in);
    ASSERT_EQ(static_cast<int>(w.start.size()), out + 1);
    for (int o = 0; o < out; ++o) {
      double s = 0.0;
      for (int k = w.start[o]; k < w.start[o + 1]; ++k) {
        s += w.weight[k];
        EXPECT_GE(w.index[k], 0);
        EXPECT_LT(w.index[k], in);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Resample, DownscalingWidensTheKernel) {
  const auto up = bicubic_axis_weights(16, 32, 2.0);
  const auto down = bicubic_axis_weights(32, 16, 0.5);
  EXPECT_EQ(up.start[1] - up.start[0], 4);
  EXPECT_EQ(down.start[9] - down.start[8], 8);
}

TEST(Resample, ConstantImageStaysConstant) {
  ImageRGB img(12, 9);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 9; ++x)
      for (int c = 0; c < 3; ++c) img.set(y, x, c, 0.25 + 0.25 * c);
  for (Ratio r : {Ratio{2, 1}, Ratio{4, 1}, Ratio{1, 2}, Ratio{1, 4}, Ratio{3, 2}}) {
    const auto out = bicubic_resize(img, r);
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x)
        for (int c = 0; c < 3; ++c) ASSERT_NEAR(out.at(y, x, c), 0.25 + 0.25 * c, 1e-12);
  }
}

TEST(Resample, RampMatchesDirectConvolution) {
  const int n = 16;
  Plane ramp(1, n);
  for (int i = 0; i < n; ++i) ramp.at(0, i) = 3.0 + 0.5 * i;
  const auto rows = bicubic_axis_weights(1, 1, 1.0);
  const auto cols = bicubic_axis_weights(n, 2 * n, 2.0);
  const Plane out = resample_plane(ramp, rows, cols);
  ASSERT_EQ(out.width, 2 * n);
  for (int o : {5, 8, 13, 20, 26}) {
    const double x = (o + 0.5) / 2.0 - 0.5;
    const int base = static_cast<int>(std::floor(x));
    double acc = 0.0, norm = 0.0;
    for (int k = base - 1; k <= base + 2; ++k) {
      const double w = cubic_kernel(x - k);
      acc += w * ramp.at(0, k);
      norm += w;
    }
    EXPECT_NEAR(out.at(0, o), acc / norm, 1e-12) << "output " << o;
    EXPECT_NEAR(out.at(0, o), 3.0 + 0.5 * x, 1e-12);
  }
}

TEST(Resample, UnitScaleIsIdentityAndOutputIsClamped) {
  ImageRGB img(4, 4);
  img.set(1, 1, 0, 1.0);
  EXPECT_EQ(bicubic_resize(img, {1, 1}).data(), img.data());
  const auto up = bicubic_resize(img, {4, 1});
  for (double v : up.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
