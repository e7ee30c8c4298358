#include "pei/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pei {

double psnr(const ImageD& estimate, const ImageD& reference, double peak) {
  require_same_shape(estimate, reference, "psnr");
  double se = 0.0;
  auto a = estimate.data();
  auto b = reference.data();
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> ssim_window(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("SSIM window size must be odd");
  std::vector<double> w(static_cast<std::size_t>(size));
  const int r = size / 2;
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += w[i + r];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

// Separable valid-region filtering of a single plane.
std::vector<double> filter_valid(const double* x, int h, int w, const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int ho = h - k + 1;
  const int wo = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * wo);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < wo; ++c) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += win[t] * x[r * w + c + t];
      rows[static_cast<std::size_t>(r) * wo + c] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ho) * wo);
  for (int r = 0; r < ho; ++r) {
    for (int c = 0; c < wo; ++c) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += win[t] * rows[static_cast<std::size_t>(r + t) * wo + c];
      out[static_cast<std::size_t>(r) * wo + c] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageD& a, const ImageD& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  if (a.channels() != 1) throw DimensionError("ssim expects single-channel images");
  const int h = a.height();
  const int w = a.width();
  int size = std::min(params.window, std::min(h, w));
  if (size % 2 == 0) --size;
  const auto win = ssim_window(size, params.sigma);

  const std::size_t n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto mu_a = filter_valid(pa.data(), h, w, win);
  const auto mu_b = filter_valid(pb.data(), h, w, win);
  const auto e_aa = filter_valid(aa.data(), h, w, win);
  const auto e_bb = filter_valid(bb.data(), h, w, win);
  const auto e_ab = filter_valid(ab.data(), h, w, win);

  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim_mean(const ImageD& a, const ImageD& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) total += ssim(a.extract_channel(c), b.extract_channel(c), params);
  return total / a.channels();
}

double ergas(const ImageD& estimate, const ImageD& reference, int factor) {
  require_same_shape(estimate, reference, "ergas");
  if (factor < 1) throw std::invalid_argument("ergas: factor must be >= 1");
  double acc = 0.0;
  for (int c = 0; c < reference.channels(); ++c) {
    auto e = estimate.channel(c);
    auto r = reference.channel(c);
    double se = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      se += (e[i] - r[i]) * (e[i] - r[i]);
      mean += r[i];
    }
    mean /= static_cast<double>(r.size());
    if (mean == 0.0) throw NumericError("ergas: reference channel " + std::to_string(c) + " has zero mean");
    const double rmse = std::sqrt(se / static_cast<double>(r.size()));
    acc += (rmse / mean) * (rmse / mean);
  }
  return 100.0 / factor * std::sqrt(acc / reference.channels());
}

double qnr_from_distortions(double d_lambda, double d_s, double alpha, double beta) {
  return std::pow(std::max(0.0, 1.0 - d_lambda), alpha) * std::pow(std::max(0.0, 1.0 - d_s), beta);
}

QnrResult qnr(const ImageD& estimate, const ImageD& ms, const ImageD& pan, const PansharpeningOperator& op,
              double alpha, double beta) {
  const int nc = estimate.channels();
  if (ms.channels() != nc || pan.channels() != 1) throw DimensionError("qnr: channel mismatch");
  if (pan.height() != estimate.height() || pan.width() != estimate.width() ||
      ms.height() * op.factor != estimate.height() || ms.width() * op.factor != estimate.width()) {
    throw DimensionError("qnr: image sizes are inconsistent with the operator");
  }
  std::vector<ImageD> xc, mc;
  for (int c = 0; c < nc; ++c) {
    xc.push_back(estimate.extract_channel(c));
    mc.push_back(ms.extract_channel(c));
  }
  QnrResult out;
  if (nc > 1) {
    double acc = 0.0;
    for (int c = 0; c < nc; ++c) {
      for (int d = 0; d < nc; ++d) {
        if (c == d) continue;
        acc += std::abs(ssim(xc[d], xc[c]) - ssim(mc[d], mc[c]));
      }
    }
    out.d_lambda = acc / (nc * (nc - 1));
  }
  const ImageD pan_low = blur_downsample(pan, op.kernel, op.factor);
  double acc = 0.0;
  for (int c = 0; c < nc; ++c) acc += std::abs(ssim(xc[c], pan) - ssim(mc[c], pan_low));
  out.d_s = acc / nc;
  out.qnr = qnr_from_distortions(out.d_lambda, out.d_s, alpha, beta);
  return out;
}

}  // namespace pei
