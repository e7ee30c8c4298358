#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "pei/errors.hpp"
#include "pei/metrics.hpp"
#include "test_util.hpp"

using namespace pei;

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// SSIM between two constant images.
double ssim_const(double a, double b) { return (2 * a * b + kC1) / (a * a + b * b + kC1); }

// Direct 2-D window SSIM, no separable filtering.
double ssim_direct(const ImageD& a, const ImageD& b) {
  const int h = a.height(), w = a.width();
  int k = std::min(11, std::min(h, w));
  if (k % 2 == 0) --k;
  std::vector<double> g(k * k);
  double gs = 0.0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double di = i - k / 2, dj = j - k / 2;
      g[i * k + j] = std::exp(-(di * di + dj * dj) / (2 * 1.5 * 1.5));
      gs += g[i * k + j];
    }
  }
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + k <= h; ++r) {
    for (int c = 0; c + k <= w; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          const double wt = g[i * k + j] / gs;
          const double va = a(0, r + i, c + j), vb = b(0, r + i, c + j);
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      const double cov = sab - ma * mb;
      total += (2 * ma * mb + kC1) * (2 * cov + kC2) /
               ((ma * ma + mb * mb + kC1) * (saa - ma * ma + sbb - mb * mb + kC2));
      ++count;
    }
  }
  return total / count;
}

ImageD constant_channels(const std::vector<double>& v, int h, int w) {
  ImageD img(static_cast<int>(v.size()), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (auto& p : img.channel(c)) p = v[c];
  }
  return img;
}

}  // namespace

TEST_CASE("psnr") {
  std::mt19937_64 rng(1);
  const ImageD x = test::random_image(3, 8, 8, rng, 0.0, 1.0);
  CHECK(psnr(x, x) == std::numeric_limits<double>::infinity());
  ImageD y = x;
  for (auto& v : y.data()) v += 0.1;
  CHECK(psnr(y, x) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(y, x, 255.0) == doctest::Approx(20.0 + 20.0 * std::log10(255.0)).epsilon(1e-12));
  ImageD z = x;
  for (auto& v : z.data()) v += 0.2;
  CHECK(psnr(z, x) < psnr(y, x));
  CHECK_THROWS_AS(psnr(x, ImageD(3, 8, 7)), DimensionError);
}

TEST_CASE("ssim") {
  std::mt19937_64 rng(2);
  const ImageD a = test::random_image(1, 16, 16, rng, 0.0, 1.0);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  const ImageD b = test::random_image(1, 16, 16, rng, 0.0, 1.0);
  CHECK(std::abs(ssim(a, b) - ssim_direct(a, b)) < 1e-12);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));

  ImageD check(1, 16, 16), inverse(1, 16, 16);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      check(0, r, c) = (r + c) % 2;
      inverse(0, r, c) = 1 - check(0, r, c);
    }
  }
  CHECK(ssim(check, inverse) < 0.0);

  // Small images shrink the window.
  const ImageD s = test::random_image(1, 6, 9, rng, 0.0, 1.0);
  const ImageD t = test::random_image(1, 6, 9, rng, 0.0, 1.0);
  CHECK(std::abs(ssim(s, t) - ssim_direct(s, t)) < 1e-12);
  CHECK(ssim_window(5, 1.5).size() == 5);
  CHECK_THROWS(ssim_window(4, 1.5));

  const ImageD multi = test::random_image(2, 12, 12, rng, 0.0, 1.0);
  CHECK(ssim_mean(multi, multi) == doctest::Approx(1.0));
}

TEST_CASE("ergas") {
  std::mt19937_64 rng(3);
  const ImageD ref = test::random_image(3, 8, 8, rng, 0.2, 1.0);
  CHECK(ergas(ref, ref, 4) == 0.0);

  // Constant channel means m_c and an error of delta * m_c on every pixel give
  // (100 / j) * delta exactly.
  const ImageD flat = constant_channels({0.2, 0.5, 0.8}, 8, 8);
  ImageD est = flat;
  const double delta = 0.05;
  for (int c = 0; c < 3; ++c) {
    for (auto& v : est.channel(c)) v *= 1.0 + delta;
  }
  CHECK(ergas(est, flat, 4) == doctest::Approx(25.0 * delta).epsilon(1e-12));
  CHECK(ergas(est, flat, 2) == doctest::Approx(50.0 * delta).epsilon(1e-12));

  ImageD zero_mean = flat;
  for (auto& v : zero_mean.channel(1)) v = 0.0;
  CHECK_THROWS_AS(ergas(est, zero_mean, 4), NumericError);
}

TEST_CASE("qnr fixed points") {
  CHECK(qnr_from_distortions(0.0, 0.0) == 1.0);
  CHECK(qnr_from_distortions(0.2, 0.0) == doctest::Approx(0.8));
  CHECK(qnr_from_distortions(0.0, 0.19) == doctest::Approx(std::pow(0.81, 1.5)));
  CHECK(qnr_from_distortions(1.5, 0.0) == 0.0);

  // Identical channels keep every inter-band SSIM at 1 on both sides.
  std::mt19937_64 rng(4);
  const auto op = make_pansharpening(2, 2);
  const ImageD band = test::random_image(1, 16, 16, rng, 0.1, 0.9);
  ImageD x(2, 16, 16);
  for (int c = 0; c < 2; ++c) std::copy(band.data().begin(), band.data().end(), x.channel(c).begin());
  const auto y = pansharpen_apply(op, x);
  const auto r = qnr(x, y.parts[0], y.parts[1], op);
  CHECK(std::abs(r.d_lambda) < 1e-12);
  CHECK(r.qnr == doctest::Approx(std::pow(1.0 - r.d_s, 1.5)).epsilon(1e-14));
}

TEST_CASE("qnr closed form on constant images") {
  const auto op = make_pansharpening(2, 2);
  const ImageD x = constant_channels({0.5, 0.3}, 16, 16);
  const ImageD ms = constant_channels({0.4, 0.2}, 8, 8);
  const ImageD pan = constant_channels({0.6}, 16, 16);

  const double d_lambda = std::abs(ssim_const(0.3, 0.5) - ssim_const(0.2, 0.4));
  const double d_s =
      0.5 * (std::abs(ssim_const(0.5, 0.6) - ssim_const(0.4, 0.6)) + std::abs(ssim_const(0.3, 0.6) - ssim_const(0.2, 0.6)));
  const auto r = qnr(x, ms, pan, op);
  CHECK(std::abs(r.d_lambda - d_lambda) < 1e-10);
  CHECK(std::abs(r.d_s - d_s) < 1e-10);
  CHECK(std::abs(r.qnr - (1 - d_lambda) * std::pow(1 - d_s, 1.5)) < 1e-10);
}

TEST_CASE("qnr matches a direct oracle") {
  std::mt19937_64 rng(5);
  const auto op = make_pansharpening(2, 2);
  const ImageD x = test::random_image(2, 16, 16, rng, 0.0, 1.0);
  const ImageD ms = test::random_image(2, 8, 8, rng, 0.0, 1.0);
  const ImageD pan = test::random_image(1, 16, 16, rng, 0.0, 1.0);
  const ImageD pan_low = blur_downsample(pan, op.kernel, op.factor);

  const ImageD x0 = x.extract_channel(0), x1 = x.extract_channel(1);
  const ImageD m0 = ms.extract_channel(0), m1 = ms.extract_channel(1);
  const double d_lambda = 0.5 * (std::abs(ssim_direct(x1, x0) - ssim_direct(m1, m0)) +
                                 std::abs(ssim_direct(x0, x1) - ssim_direct(m0, m1)));
  const double d_s = 0.5 * (std::abs(ssim_direct(x0, pan) - ssim_direct(m0, pan_low)) +
                            std::abs(ssim_direct(x1, pan) - ssim_direct(m1, pan_low)));
  const auto r = qnr(x, ms, pan, op);
  CHECK(std::abs(r.d_lambda - d_lambda) < 1e-10);
  CHECK(std::abs(r.d_s - d_s) < 1e-10);
  CHECK(std::abs(r.qnr - std::max(0.0, 1 - d_lambda) * std::pow(std::max(0.0, 1 - d_s), 1.5)) < 1e-10);

  CHECK_THROWS_AS(qnr(x, ms, ImageD(1, 8, 8), op), DimensionError);
  CHECK_THROWS_AS(qnr(x, ImageD(3, 8, 8), pan, op), DimensionError);
}
