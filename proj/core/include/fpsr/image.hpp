#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpsr/tensor.hpp"

namespace fpsr {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel H x W plane of reals, row-major. No range constraint.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0);

  double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// H x W x 3 image with channel values in [0,1], interleaved RGB.
class ImageRGB {
 public:
  ImageRGB() = default;
  ImageRGB(int height, int width);
  /// Values are clamped into [0,1].
  ImageRGB(int height, int width, std::vector<double> rgb);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  void set(int y, int x, int c, double v);
  const std::vector<double>& data() const { return data_; }

  Plane channel(int c) const;
  static ImageRGB from_planes(const Plane& r, const Plane& g, const Plane& b);

  ImageRGB crop(int y0, int x0, int h, int w) const;
  ImageRGB flip_horizontal() const;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3 + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// 8-bit RGB PNG. Gray and alpha inputs are expanded or dropped.
ImageRGB load_image(const std::filesystem::path& path);
/// Writes 8-bit RGB PNG, quantizing round(255 v).
void save_image(const ImageRGB& image, const std::filesystem::path& path);

/// BT.601 studio-swing luma on the 0-255 scale: 16 + 65.481 R + 128.553 G + 24.966 B.
Plane rgb_to_y601(const ImageRGB& image);

Plane crop_plane(const Plane& p, int border);

// Conversions between images and 1 x 3 x H x W tensors.
template <typename T>
Tensor<T> image_to_tensor(const ImageRGB& image);
template <typename T>
Tensor<T> images_to_tensor(const std::vector<ImageRGB>& images);
/// Item `n` of an N x 3 x H x W tensor; values are clamped into [0,1].
template <typename T>
ImageRGB tensor_to_image(const Tensor<T>& t, std::int64_t n = 0);

}  // namespace fpsr
