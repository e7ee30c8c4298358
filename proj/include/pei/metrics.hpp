#pragma once

#include <optional>

#include "pei/image.hpp"
#include "pei/physics.hpp"

namespace pei {

/// 10 log10(peak^2 / MSE); +infinity for identical images.
double psnr(const ImageD& estimate, const ImageD& reference, double peak = 1.0);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Normalized Gaussian window; the size is clamped to the largest odd value
/// that fits in the image.
std::vector<double> ssim_window(int size, double sigma);

/// Mean SSIM over the valid (unpadded) region of two single-channel images.
double ssim(const ImageD& a, const ImageD& b, const SsimParams& params = {});
/// Channel-averaged SSIM.
double ssim_mean(const ImageD& a, const ImageD& b, const SsimParams& params = {});

/// (100 / j) sqrt(mean_c (RMSE_c / mean_c(ref))^2). Throws NumericError when a
/// reference channel has zero mean.
double ergas(const ImageD& estimate, const ImageD& reference, int factor);

struct QnrResult {
  double qnr = 0.0;
  double d_lambda = 0.0;
  double d_s = 0.0;
};

/// (1 - D_lambda)^alpha (1 - D_s)^beta with Q = SSIM.
///   D_lambda = mean over ordered pairs c != c' of |Q(x^c', x^c) - Q(ms^c', ms^c)|
///   D_s      = mean over c of |Q(x^c, pan) - Q(ms^c, A_SR pan)|
/// Negative bases are clamped to zero.
QnrResult qnr(const ImageD& estimate, const ImageD& ms, const ImageD& pan, const PansharpeningOperator& op,
              double alpha = 1.0, double beta = 1.5);
double qnr_from_distortions(double d_lambda, double d_s, double alpha = 1.0, double beta = 1.5);

struct MetricReport {
  std::optional<double> psnr, ssim, ergas, qnr, d_lambda, d_s;
};

}  // namespace pei
