#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pei/errors.hpp"

namespace pei {

/// Channel-major C x H x W raster.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, T fill = T(0))
      : channels_(channels), height_(height), width_(width) {
    if (channels < 1 || height < 1 || width < 1) {
      throw DimensionError("image dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  std::span<T> channel(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> channel(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  /// Copies channel c into a single-channel image.
  Image extract_channel(int c) const {
    Image out(1, height_, width_);
    auto src = channel(c);
    std::copy(src.begin(), src.end(), out.data_.begin());
    return out;
  }

  bool same_shape(const Image& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  template <typename U>
  Image<U> cast() const {
    Image<U> out(channels_, height_, width_);
    auto dst = out.data();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
    return out;
  }

  static Image from_values(int channels, int height, int width, std::span<const T> values) {
    Image out(channels, height, width);
    if (values.size() != out.size()) throw DimensionError("value count does not match image shape");
    std::copy(values.begin(), values.end(), out.data_.begin());
    return out;
  }

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using ImageD = Image<double>;
using ImageF = Image<float>;

template <typename T>
void require_same_shape(const Image<T>& a, const Image<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": image shapes differ");
  }
}

template <typename T>
double dot(const Image<T>& a, const Image<T>& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) s += static_cast<double>(da[i]) * db[i];
  return s;
}

}  // namespace pei
