#include "pei/warp.hpp"

#include <cmath>

namespace pei {

double reflect_coordinate(double x, int n) {
  if (n <= 1) return 0.0;
  const double period = 2.0 * (n - 1);
  double r = std::fmod(x, period);
  if (r < 0.0) r += period;
  if (r > n - 1) r = period - r;
  return r;
}

int reflect_index(int i, int n) {
  if (n <= 1) return 0;
  const int period = 2 * (n - 1);
  int r = i % period;
  if (r < 0) r += period;
  return r > n - 1 ? period - r : r;
}

WarpTable::WarpTable(const Homography& h, int height, int width)
    : height_(height), width_(width) {
  if (height < 1 || width < 1) throw DimensionError("warp size must be positive");
  const Homography back = inverse(h);
  const Mat3& m = back.matrix();
  taps_.resize(static_cast<std::size_t>(height) * width);

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = x + 0.5;
      const double v = y + 0.5;
      double qx = m(0, 0) * u + m(0, 1) * v + m(0, 2);
      double qy = m(1, 0) * u + m(1, 1) * v + m(1, 2);
      double qw = m(2, 0) * u + m(2, 1) * v + m(2, 2);
      const double scale = std::max({std::abs(qx), std::abs(qy), std::abs(qw)});
      if (std::abs(qw) <= kAtInfinityEps * scale) {
        // Pulled back to the line at infinity: clamp w so the far-away
        // coordinate is folded like any other out-of-range sample.
        qw = std::copysign(kAtInfinityEps * scale, qw == 0.0 ? 1.0 : qw);
      }
      const double sx = reflect_coordinate(qx / qw - 0.5, width);
      const double sy = reflect_coordinate(qy / qw - 0.5, height);

      const int x0 = std::min(static_cast<int>(std::floor(sx)), width - 1);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), height - 1);
      const int x1 = std::min(x0 + 1, width - 1);
      const int y1 = std::min(y0 + 1, height - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;

      Taps& t = taps_[static_cast<std::size_t>(y) * width + x];
      t.index = {static_cast<std::uint32_t>(y0 * width + x0), static_cast<std::uint32_t>(y0 * width + x1),
                 static_cast<std::uint32_t>(y1 * width + x0), static_cast<std::uint32_t>(y1 * width + x1)};
      t.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
    }
  }
}

template <typename T>
void WarpTable::apply(const T* in, T* out, int channels) const {
  const std::size_t plane = taps_.size();
  for (int c = 0; c < channels; ++c) {
    const T* src = in + c * plane;
    T* dst = out + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const Taps& t = taps_[i];
      dst[i] = static_cast<T>(t.weight[0] * src[t.index[0]] + t.weight[1] * src[t.index[1]] +
                              t.weight[2] * src[t.index[2]] + t.weight[3] * src[t.index[3]]);
    }
  }
}

template <typename T>
void WarpTable::adjoint(const T* in, T* out, int channels) const {
  const std::size_t plane = taps_.size();
  for (int c = 0; c < channels; ++c) {
    const T* src = in + c * plane;
    T* dst = out + c * plane;
    std::fill(dst, dst + plane, T(0));
    for (std::size_t i = 0; i < plane; ++i) {
      const Taps& t = taps_[i];
      for (int k = 0; k < 4; ++k) dst[t.index[k]] += static_cast<T>(t.weight[k] * src[i]);
    }
  }
}

template <typename T>
Image<T> WarpTable::apply(const Image<T>& x) const {
  if (x.height() != height_ || x.width() != width_) throw DimensionError("warp_apply: size mismatch");
  Image<T> out(x.channels(), height_, width_);
  apply(x.data().data(), out.data().data(), x.channels());
  return out;
}

template <typename T>
Image<T> WarpTable::adjoint(const Image<T>& v) const {
  if (v.height() != height_ || v.width() != width_) throw DimensionError("warp_adjoint: size mismatch");
  Image<T> out(v.channels(), height_, width_);
  adjoint(v.data().data(), out.data().data(), v.channels());
  return out;
}

template Image<float> WarpTable::apply(const Image<float>&) const;
template Image<double> WarpTable::apply(const Image<double>&) const;
template Image<float> WarpTable::adjoint(const Image<float>&) const;
template Image<double> WarpTable::adjoint(const Image<double>&) const;
template void WarpTable::apply(const float*, float*, int) const;
template void WarpTable::apply(const double*, double*, int) const;
template void WarpTable::adjoint(const float*, float*, int) const;
template void WarpTable::adjoint(const double*, double*, int) const;

}  // namespace pei
