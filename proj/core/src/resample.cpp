#include "fpsr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fpsr {

int scaled_extent(int in_size, Ratio scale) {
  if (scale.num <= 0 || scale.den <= 0) throw std::invalid_argument("scale must be positive");
  const long long n = static_cast<long long>(in_size) * scale.num;
  return static_cast<int>((n + scale.den - 1) / scale.den);
}

double cubic_kernel(double x, double a) {
  const double ax = std::abs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0;
  if (ax < 2.0) return a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a;
  return 0.0;
}

namespace {

int mirror_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

AxisWeights bicubic_axis_weights(int in_size, int out_size, double scale) {
  if (in_size < 1 || out_size < 1) {
    throw std::invalid_argument("resample extents must be >= 1 (in " + std::to_string(in_size) +
                                ", out " + std::to_string(out_size) + ")");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("resample scale must be positive");

  const bool antialias = scale < 1.0;
  const double kernel_scale = antialias ? scale : 1.0;
  const double width = 4.0 / kernel_scale;
  const int taps = static_cast<int>(std::ceil(width)) + 2;

  AxisWeights w;
  w.in_size = in_size;
  w.out_size = out_size;
  w.start.reserve(static_cast<std::size_t>(out_size) + 1);
  w.start.push_back(0);
  std::vector<double> row(static_cast<std::size_t>(taps));
  for (int o = 0; o < out_size; ++o) {
    const double u = (o + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const double d = u - (left + t);
      row[t] = kernel_scale * cubic_kernel(kernel_scale * d);
      total += row[t];
    }
    for (int t = 0; t < taps; ++t) {
      if (row[t] == 0.0) continue;
      w.index.push_back(mirror_index(left + t, in_size));
      w.weight.push_back(row[t] / total);
    }
    w.start.push_back(static_cast<int>(w.index.size()));
  }
  return w;
}

Plane resample_plane(const Plane& p, const AxisWeights& rows, const AxisWeights& cols) {
  if (rows.in_size != p.height || cols.in_size != p.width) {
    throw std::invalid_argument("resample weights do not match plane extents");
  }
  // Columns first, then rows.
  Plane tmp(p.height, cols.out_size);
  for (int y = 0; y < p.height; ++y) {
    for (int o = 0; o < cols.out_size; ++o) {
      double acc = 0.0;
      for (int k = cols.start[o]; k < cols.start[o + 1]; ++k) acc += cols.weight[k] * p.at(y, cols.index[k]);
      tmp.at(y, o) = acc;
    }
  }
  Plane out(rows.out_size, cols.out_size);
  for (int o = 0; o < rows.out_size; ++o) {
    for (int k = rows.start[o]; k < rows.start[o + 1]; ++k) {
      const double wk = rows.weight[k];
      const int src = rows.index[k];
      for (int x = 0; x < cols.out_size; ++x) out.at(o, x) += wk * tmp.at(src, x);
    }
  }
  return out;
}

Plane resize_plane(const Plane& p, Ratio scale) {
  if (scale.is_unit()) return p;
  const int oh = scaled_extent(p.height, scale);
  const int ow = scaled_extent(p.width, scale);
  if (oh < 1 || ow < 1) throw std::invalid_argument("resize output would be empty");
  return resample_plane(p, bicubic_axis_weights(p.height, oh, scale.value()),
                        bicubic_axis_weights(p.width, ow, scale.value()));
}

ImageRGB bicubic_resize(const ImageRGB& image, Ratio scale) {
  if (scale.num <= 0 || scale.den <= 0) throw std::invalid_argument("scale must be positive");
  if (scale.is_unit()) return image;
  const int oh = scaled_extent(image.height(), scale);
  const int ow = scaled_extent(image.width(), scale);
  if (oh < 1 || ow < 1) {
    throw std::invalid_argument("bicubic_resize: output extent below 1 for " +
                                std::to_string(image.height()) + "x" +
                                std::to_string(image.width()) + " at scale " +
                                std::to_string(scale.num) + "/" + std::to_string(scale.den));
  }
  const auto rows = bicubic_axis_weights(image.height(), oh, scale.value());
  const auto cols = bicubic_axis_weights(image.width(), ow, scale.value());
  // from_planes clamps into [0,1].
  return ImageRGB::from_planes(resample_plane(image.channel(0), rows, cols),
                               resample_plane(image.channel(1), rows, cols),
                               resample_plane(image.channel(2), rows, cols));
}

}  // namespace fpsr
