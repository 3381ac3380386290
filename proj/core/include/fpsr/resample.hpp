#pragma once

#include <vector>

#include "fpsr/image.hpp"

namespace fpsr {

/// Exact scale factor num/den.
struct Ratio {
  int num = 1;
  int den = 1;
  double value() const { return static_cast<double>(num) / den; }
  bool is_unit() const { return num == den; }
};

/// Output extent ceil(in * num / den).
int scaled_extent(int in_size, Ratio scale);

/// Sparse 1-D resampling matrix in compressed-row form: output sample `o`
/// is sum over k in [start[o], start[o+1]) of weight[k] * input[index[k]].
struct AxisWeights {
  int in_size = 0;
  int out_size = 0;
  std::vector<int> start;
  std::vector<int> index;
  std::vector<double> weight;
};

/// Keys cubic convolution kernel.
double cubic_kernel(double x, double a = -0.5);

/// Bicubic weights (a = -0.5). When scale < 1 the kernel is stretched by
/// 1/scale for antialiasing. Samples map by in = (out + 0.5) / scale - 0.5,
/// borders are mirrored, and each row is normalized to sum 1.
AxisWeights bicubic_axis_weights(int in_size, int out_size, double scale);

Plane resample_plane(const Plane& p, const AxisWeights& rows, const AxisWeights& cols);
Plane resize_plane(const Plane& p, Ratio scale);

/// Bicubic resize; output is clamped to [0,1]. Unit scale returns the input.
ImageRGB bicubic_resize(const ImageRGB& image, Ratio scale);

}  // namespace fpsr
