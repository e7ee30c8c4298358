#pragma once

// Forward operators and noise models for inpainting and pansharpening.

#include <random>
#include <variant>
#include <vector>

#include "pei/image.hpp"

namespace pei {

/// Square odd-sized 2D filter, row-major.
struct Kernel2D {
  int size = 1;
  std::vector<double> taps{1.0};

  double operator()(int r, int c) const { return taps[static_cast<std::size_t>(r) * size + c]; }
  double sum() const;
};

Kernel2D gaussian_mtf_kernel(double sigma, int size);
/// Smallest odd size >= 8 sigma + 1.
int default_mtf_kernel_size(double sigma);
Kernel2D box_kernel(int size);

/// Reflection-padded correlation evaluated on every stride-th pixel of each
/// axis (offset 0). Output is (H / stride) x (W / stride).
template <typename T>
Image<T> filter_decimate(const Image<T>& x, const Kernel2D& k, int stride);
/// Exact transpose of filter_decimate for an input of the given size.
template <typename T>
Image<T> filter_decimate_adjoint(const Image<T>& v, const Kernel2D& k, int stride, int height,
                                 int width);

struct InpaintingOperator {
  ImageD mask;  // 1 x H x W, entries in {0, 1}; 1 = kept
  double masked_fraction = 0.0;

  int height() const { return mask.height(); }
  int width() const { return mask.width(); }
  double kept_fraction() const;
};

InpaintingOperator random_mask(double p, int height, int width, std::mt19937_64& rng);
/// Elementwise mask multiply on every channel; self-adjoint and idempotent.
template <typename T>
Image<T> inpaint_apply(const InpaintingOperator& op, const Image<T>& x);

struct PansharpeningOperator {
  int factor = 4;
  Kernel2D kernel;
  std::vector<double> srf;  // one nonnegative weight per MS channel, summing to 1

  int channels() const { return static_cast<int>(srf.size()); }
  void validate() const;
};

/// Gaussian MTF with sigma = factor and a flat SRF over `channels` bands.
PansharpeningOperator make_pansharpening(int channels, int factor);
PansharpeningOperator make_pansharpening(int channels, int factor, double mtf_sigma,
                                         std::vector<double> srf);
std::vector<double> flat_srf(int channels);

template <typename T>
Image<T> blur_downsample(const Image<T>& x, const Kernel2D& k, int factor);
template <typename T>
Image<T> blur_downsample_adjoint(const Image<T>& v, const Kernel2D& k, int factor);

template <typename T>
Image<T> srf_apply(const std::vector<double>& weights, const Image<T>& x);
template <typename T>
Image<T> srf_adjoint(const std::vector<double>& weights, const Image<T>& v);

/// A measurement: one raster per part. Inpainting has one part, pansharpening
/// has {MS, PAN}.
template <typename T>
struct Measurement {
  std::vector<Image<T>> parts;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    return n;
  }
};

template <typename T>
Measurement<T> pansharpen_apply(const PansharpeningOperator& op, const Image<T>& x);
/// Adjoint of the stacked operator: A_SR^T v_ms + R^T v_pan.
template <typename T>
Image<T> pansharpen_adjoint(const PansharpeningOperator& op, const Measurement<T>& v);

using ForwardOperator = std::variant<InpaintingOperator, PansharpeningOperator>;

template <typename T>
Measurement<T> forward_apply(const ForwardOperator& op, const Image<T>& x);
template <typename T>
Image<T> forward_adjoint(const ForwardOperator& op, const Measurement<T>& v);

/// 0/1 indicator of the entries that carry a noisy measurement, one raster per
/// part. Masked inpainting pixels are not measured. An empty result means
/// every entry is measured.
Measurement<double> measurement_support(const ForwardOperator& op, int channels);

struct NoiseModel {
  enum class Kind { none, gaussian, poisson };
  Kind kind = Kind::none;
  double sigma = 0.0;  // gaussian std, image units
  double gain = 0.0;   // poisson gain gamma, image units per photon

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian(double s) { return {Kind::gaussian, s, 0.0}; }
  static NoiseModel poisson(double g) { return {Kind::poisson, 0.0, g}; }
  bool noiseless() const {
    return kind == Kind::none || (kind == Kind::gaussian && sigma == 0.0) ||
           (kind == Kind::poisson && gain == 0.0);
  }
  void validate() const;
};

/// gaussian: z + sigma * N(0,1); poisson: gain * Poisson(z / gain).
/// Throws PhysicsError on negative input under the Poisson model.
ImageD apply_noise(const NoiseModel& model, const ImageD& z, std::mt19937_64& rng);

}  // namespace pei
