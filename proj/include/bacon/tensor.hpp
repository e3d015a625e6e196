#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bacon/error.hpp"

namespace bacon {

// Row-major H×W grid. Used for disparity maps, photometric maps and masks.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(checked_area(height, width)), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

  template <class U>
  bool same_shape(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  static long checked_area(int h, int w) {
    if (h < 0 || w < 0) throw InvalidArgument("negative grid dimensions");
    return static_cast<long>(h) * w;
  }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Map = Grid<double>;
using DisparityMap = Map;
using Mask = Grid<std::uint8_t>;

// Planar (channel-major) image, nominally in [0,1]. The `augmented` tag travels
// with the pixels so the teacher path can refuse augmented inputs.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int c, int y, int x) { return data_[offset(c, y, x)]; }
  double operator()(int c, int y, int x) const { return data_[offset(c, y, x)]; }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool augmented() const { return augmented_; }
  void set_augmented(bool v) { augmented_ = v; }

  template <class T>
  bool same_hw(const Grid<T>& g) const {
    return height_ == g.height() && width_ == g.width();
  }
  bool same_shape(const Image& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  // Pixel-exact comparison; ignores the augmentation tag.
  bool operator==(const Image& o) const { return same_shape(o) && data_ == o.data_; }

 private:
  std::size_t offset(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
  bool augmented_ = false;
};

// Copies the window [y0, y0+h) × [x0, x0+w).
Image crop(const Image& img, int y0, int x0, int h, int w);
template <class T>
Grid<T> crop(const Grid<T>& g, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > g.height() || x0 + w > g.width())
    throw InvalidArgument("crop window outside grid");
  Grid<T> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = g(y0 + y, x0 + x);
  return out;
}

void require_same_shape(const Image& a, const Image& b, const std::string& what);
template <class T, class U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const std::string& what) {
  if (!a.same_shape(b))
    throw ShapeMismatch(what + ": " + std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                        std::to_string(b.height()) + "x" + std::to_string(b.width()));
}
template <class T>
void require_same_shape(const Image& a, const Grid<T>& b, const std::string& what) {
  if (!a.same_hw(b))
    throw ShapeMismatch(what + ": image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                        " vs map " + std::to_string(b.height()) + "x" + std::to_string(b.width()));
}

std::size_t count_true(const Mask& m);

}  // namespace bacon
