#include "fpsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace fpsr {

namespace {
double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }
}  // namespace

Plane::Plane(int h, int w, double fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
  if (h < 0 || w < 0) throw std::invalid_argument("plane extents must be nonnegative");
}

ImageRGB::ImageRGB(int height, int width)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * 3, 0.0) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("image extents must be >= 1, got " + std::to_string(height) +
                                "x" + std::to_string(width));
  }
}

ImageRGB::ImageRGB(int height, int width, std::vector<double> rgb) : ImageRGB(height, width) {
  if (rgb.size() != data_.size()) {
    throw std::invalid_argument("image " + std::to_string(height) + "x" + std::to_string(width) +
                                " needs " + std::to_string(data_.size()) + " values, got " +
                                std::to_string(rgb.size()));
  }
  for (std::size_t i = 0; i < rgb.size(); ++i) data_[i] = clamp01(rgb[i]);
}

void ImageRGB::set(int y, int x, int c, double v) { data_[index(y, x, c)] = clamp01(v); }

Plane ImageRGB::channel(int c) const {
  Plane p(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) p.at(y, x) = at(y, x, c);
  return p;
}

ImageRGB ImageRGB::from_planes(const Plane& r, const Plane& g, const Plane& b) {
  if (r.height != g.height || r.height != b.height || r.width != g.width || r.width != b.width) {
    throw std::invalid_argument("channel planes differ in size");
  }
  ImageRGB img(r.height, r.width);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      img.set(y, x, 0, r.at(y, x));
      img.set(y, x, 1, g.at(y, x));
      img.set(y, x, 2, b.at(y, x));
    }
  }
  return img;
}

ImageRGB ImageRGB::crop(int y0, int x0, int h, int w) const {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > height_ || x0 + w > width_) {
    throw std::out_of_range("crop window outside image");
  }
  ImageRGB out(h, w);
  for (int y = 0; y < h; ++y) {
    const auto* src = &data_[index(y0 + y, x0, 0)];
    std::copy(src, src + static_cast<std::ptrdiff_t>(w) * 3, &out.data_[out.index(y, 0, 0)]);
  }
  return out;
}

ImageRGB ImageRGB::flip_horizontal() const {
  ImageRGB out(height_, width_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x)
      for (int c = 0; c < 3; ++c) out.data_[out.index(y, x, c)] = at(y, width_ - 1 - x, c);
  return out;
}

ImageRGB load_image(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageError("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("malformed PNG '" + path.string() + "': " + msg);
  }
  const int h = static_cast<int>(img.height);
  const int w = static_cast<int>(img.width);
  std::vector<double> rgb(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) rgb[i] = buf[i] / 255.0;
  return ImageRGB(h, w, std::move(rgb));
}

void save_image(const ImageRGB& image, const std::filesystem::path& path) {
  if (image.empty()) throw ImageError("cannot save an empty image to '" + path.string() + "'");
  std::vector<std::uint8_t> buf(image.data().size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<std::uint8_t>(std::lround(clamp01(image.data()[i]) * 255.0));
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw ImageError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

Plane rgb_to_y601(const ImageRGB& image) {
  Plane y(image.height(), image.width());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      y.at(r, c) = 16.0 + 65.481 * image.at(r, c, 0) + 128.553 * image.at(r, c, 1) +
                   24.966 * image.at(r, c, 2);
    }
  }
  return y;
}

Plane crop_plane(const Plane& p, int border) {
  if (border == 0) return p;
  if (border < 0 || p.height <= 2 * border || p.width <= 2 * border) {
    throw std::invalid_argument("plane " + std::to_string(p.height) + "x" +
                                std::to_string(p.width) + " too small for a " +
                                std::to_string(border) + " px border crop");
  }
  Plane out(p.height - 2 * border, p.width - 2 * border);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(y, x) = p.at(y + border, x + border);
  return out;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<ImageRGB>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const int h = images.front().height();
  const int w = images.front().width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> v(images.size() * 3 * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (img.height() != h || img.width() != w) {
      throw ShapeError("images_to_tensor: batch items differ in size");
    }
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          v[(n * 3 + c) * plane + static_cast<std::size_t>(y) * w + x] = static_cast<T>(img.at(y, x, c));
  }
  return Tensor<T>({static_cast<std::int64_t>(images.size()), 3, h, w}, std::move(v));
}

template <typename T>
Tensor<T> image_to_tensor(const ImageRGB& image) {
  return images_to_tensor<T>({image});
}

template <typename T>
ImageRGB tensor_to_image(const Tensor<T>& t, std::int64_t n) {
  if (t.rank() != 4 || t.dim(1) != 3) {
    throw ShapeError("tensor_to_image expects N x 3 x H x W, got " + shape_str(t.shape()));
  }
  if (n < 0 || n >= t.dim(0)) throw ShapeError("tensor_to_image: batch index out of range");
  const int h = static_cast<int>(t.dim(2));
  const int w = static_cast<int>(t.dim(3));
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const auto d = t.data();
  std::vector<double> rgb(plane * 3);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      rgb[i * 3 + c] = static_cast<double>(d[(static_cast<std::size_t>(n) * 3 + c) * plane + i]);
  return ImageRGB(h, w, std::move(rgb));
}

template Tensor<float> images_to_tensor<float>(const std::vector<ImageRGB>&);
template Tensor<double> images_to_tensor<double>(const std::vector<ImageRGB>&);
template Tensor<float> image_to_tensor<float>(const ImageRGB&);
template Tensor<double> image_to_tensor<double>(const ImageRGB&);
template ImageRGB tensor_to_image<float>(const Tensor<float>&, std::int64_t);
template ImageRGB tensor_to_image<double>(const Tensor<double>&, std::int64_t);

}  // namespace fpsr
