#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pei/image.hpp"
#include "pei/projective.hpp"

namespace pei {

/// Reflects a continuous index into [0, n - 1] about the first and last pixel
/// centres, folding repeatedly for far out-of-range values.
double reflect_coordinate(double x, int n);
/// Integer version of reflect_coordinate, for padding.
int reflect_index(int i, int n);

/// Homography resampling as a fixed sparse linear operator.
///
/// Pixel (x, y) covers [x, x + 1) x [y, y + 1); its centre (x + 0.5, y + 0.5)
/// is pulled back through the inverse homography, reflected into the image,
/// and bilinearly interpolated. Every output pixel owns four (index, weight)
/// taps whose weights are nonnegative and sum to one.
class WarpTable {
 public:
  struct Taps {
    std::array<std::uint32_t, 4> index;
    std::array<double, 4> weight;
  };

  WarpTable() = default;
  /// Throws DegenerateTransformError if h cannot be inverted.
  WarpTable(const Homography& h, int height, int width);

  static WarpTable identity(int height, int width) {
    return WarpTable(Homography::identity(), height, width);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<Taps>& taps() const { return taps_; }

  /// Per-channel weighted gather; output has the same shape as x.
  template <typename T>
  Image<T> apply(const Image<T>& x) const;
  /// Transpose of apply: weighted scatter-add into source pixels.
  template <typename T>
  Image<T> adjoint(const Image<T>& v) const;

  template <typename T>
  void apply(const T* in, T* out, int channels) const;
  template <typename T>
  void adjoint(const T* in, T* out, int channels) const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Taps> taps_;
};

inline WarpTable build_warp(const Homography& h, int height, int width) {
  return WarpTable(h, height, width);
}

template <typename T>
Image<T> warp_apply(const WarpTable& t, const Image<T>& x) {
  return t.apply(x);
}

template <typename T>
Image<T> warp_adjoint(const WarpTable& t, const Image<T>& v) {
  return t.adjoint(v);
}

}  // namespace pei
