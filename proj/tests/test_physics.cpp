#include <cmath>
#include <random>

#include "doctest.h"
#include "pei/errors.hpp"
#include "pei/physics.hpp"
#include "test_util.hpp"

using namespace pei;

namespace {

double measurement_dot(const Measurement<double>& a, const Measurement<double>& b) {
  double s = 0;
  for (std::size_t p = 0; p < a.parts.size(); ++p) s += dot(a.parts[p], b.parts[p]);
  return s;
}

bool close_rel(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(a)); }

}  // namespace

TEST_CASE("random mask") {
  std::mt19937_64 rng(1);
  const auto all = random_mask(0.0, 8, 8, rng);
  for (double v : all.mask.data()) CHECK(v == 1.0);

  const auto m = random_mask(0.7, 256, 256, rng);
  CHECK(m.kept_fraction() == doctest::Approx(0.30).epsilon(0.01 / 0.30));
  for (double v : m.mask.data()) CHECK((v == 0.0 || v == 1.0));

  std::mt19937_64 a(5), b(5);
  CHECK(random_mask(0.5, 16, 16, a).mask.data()[7] == random_mask(0.5, 16, 16, b).mask.data()[7]);
  std::mt19937_64 c(5), d(5);
  const auto mc = random_mask(0.5, 16, 16, c), md = random_mask(0.5, 16, 16, d);
  CHECK(std::equal(mc.mask.data().begin(), mc.mask.data().end(), md.mask.data().begin()));
  CHECK_THROWS(random_mask(1.0, 4, 4, rng));
}

TEST_CASE("inpainting operator") {
  std::mt19937_64 rng(2);
  const auto ones = random_mask(0.0, 5, 6, rng);
  const ImageD x = test::random_image(3, 5, 6, rng);
  const ImageD y = inpaint_apply(ones, x);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));

  const auto op = random_mask(0.6, 5, 6, rng);
  const ImageD ax = inpaint_apply(op, x);
  const ImageD aax = inpaint_apply(op, ax);
  CHECK(std::equal(ax.data().begin(), ax.data().end(), aax.data().begin()));
  for (int i = 0; i < 100; ++i) {
    const ImageD u = test::random_image(3, 5, 6, rng, -1, 1);
    const ImageD v = test::random_image(3, 5, 6, rng, -1, 1);
    CHECK(close_rel(dot(inpaint_apply(op, u), v), dot(u, inpaint_apply(op, v)), 1e-12));
  }
  CHECK_THROWS_AS(inpaint_apply(op, ImageD(3, 4, 6)), DimensionError);
}

TEST_CASE("Gaussian MTF kernel") {
  CHECK(default_mtf_kernel_size(4.0) == 33);
  const Kernel2D k = gaussian_mtf_kernel(4.0, 33);
  CHECK(k.size == 33);
  CHECK(k.sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (int r = 0; r < 33; ++r) {
    for (int c = 0; c < 33; ++c) {
      CHECK(k(r, c) == doctest::Approx(k(32 - r, c)).epsilon(1e-14));
      CHECK(k(r, c) == doctest::Approx(k(c, r)).epsilon(1e-14));
    }
  }
  const Kernel2D delta = gaussian_mtf_kernel(0.05, default_mtf_kernel_size(0.05));
  CHECK(delta(delta.size / 2, delta.size / 2) > 1.0 - 1e-12);

  const Kernel2D box = box_kernel(3);
  CHECK(box.sum() == doctest::Approx(1.0));
  CHECK(box(0, 0) == doctest::Approx(1.0 / 9));
}

TEST_CASE("blur and downsample") {
  const Kernel2D k = gaussian_mtf_kernel(4.0, 33);
  const ImageD c(2, 64, 64, 0.3);
  const ImageD y = blur_downsample(c, k, 4);
  CHECK(y.channels() == 2);
  CHECK(y.height() == 16);
  CHECK(y.width() == 16);
  for (double v : y.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const ImageD x = test::random_image(2, 24, 20, rng, -1, 1);
    const ImageD v = test::random_image(2, 6, 5, rng, -1, 1);
    const ImageD small = blur_downsample(x, gaussian_mtf_kernel(1.5, 9), 4);
    const ImageD back = blur_downsample_adjoint(v, gaussian_mtf_kernel(1.5, 9), 4);
    CHECK(back.height() == 24);
    CHECK(close_rel(dot(small, v), dot(x, back), 1e-10));
  }

  // Stride 1 filtering is a plain reflected correlation.
  const ImageD x = test::random_image(1, 9, 9, rng);
  const ImageD f = filter_decimate(x, box_kernel(3), 1);
  double s = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) s += x(0, 4 + dy, 4 + dx);
  }
  CHECK(f(0, 4, 4) == doctest::Approx(s / 9));
  CHECK_THROWS(blur_downsample(ImageD(1, 10, 10), k, 4));
}

TEST_CASE("spectral response") {
  std::mt19937_64 rng(4);
  const ImageD band = test::random_image(1, 6, 6, rng);
  ImageD four(4, 6, 6);
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 36; ++i) four.channel(c)[i] = band.data()[i];
  }
  const ImageD pan = srf_apply(flat_srf(4), four);
  for (int i = 0; i < 36; ++i) CHECK(pan.data()[i] == doctest::Approx(band.data()[i]).epsilon(1e-14));

  const ImageD x = test::random_image(4, 6, 6, rng);
  const ImageD first = srf_apply(std::vector<double>{1, 0, 0, 0}, x);
  for (int i = 0; i < 36; ++i) CHECK(first.data()[i] == x.channel(0)[i]);

  const std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  for (int i = 0; i < 100; ++i) {
    const ImageD u = test::random_image(4, 6, 6, rng, -1, 1);
    const ImageD v = test::random_image(1, 6, 6, rng, -1, 1);
    CHECK(close_rel(dot(srf_apply(w, u), v), dot(u, srf_adjoint(w, v)), 1e-12));
  }
}

TEST_CASE("pansharpening operator") {
  const auto op = make_pansharpening(4, 4);
  CHECK(op.factor == 4);
  CHECK(op.kernel.size == 33);
  CHECK(op.srf.size() == 4);

  const ImageD c(4, 32, 32, 0.6);
  const auto y = pansharpen_apply(op, c);
  REQUIRE(y.parts.size() == 2);
  CHECK(y.parts[0].height() == 8);
  CHECK(y.parts[1].channels() == 1);
  CHECK(y.parts[1].height() == 32);
  for (double v : y.parts[0].data()) CHECK(v == doctest::Approx(0.6));
  for (double v : y.parts[1].data()) CHECK(v == doctest::Approx(0.6));

  std::mt19937_64 rng(5);
  const ForwardOperator fop = make_pansharpening(3, 2, 1.0, {0.5, 0.3, 0.2});
  for (int i = 0; i < 100; ++i) {
    const ImageD x = test::random_image(3, 12, 10, rng, -1, 1);
    Measurement<double> v;
    v.parts.push_back(test::random_image(3, 6, 5, rng, -1, 1));
    v.parts.push_back(test::random_image(1, 12, 10, rng, -1, 1));
    CHECK(close_rel(measurement_dot(forward_apply(fop, x), v), dot(x, forward_adjoint(fop, v)), 1e-10));
  }
  CHECK_THROWS(make_pansharpening(3, 2, 1.0, {0.5, 0.6, -0.1}));
  CHECK_THROWS(make_pansharpening(3, 2, 1.0, {0.5, 0.5}));
}

TEST_CASE("measurement support") {
  std::mt19937_64 rng(6);
  const ForwardOperator inp = random_mask(0.5, 4, 4, rng);
  const auto s = measurement_support(inp, 2);
  REQUIRE(s.parts.size() == 1);
  CHECK(s.parts[0].channels() == 2);
  const auto& mask = std::get<InpaintingOperator>(inp).mask;
  for (int i = 0; i < 16; ++i) CHECK(s.parts[0].channel(1)[i] == mask.data()[i]);
  CHECK(measurement_support(ForwardOperator(make_pansharpening(3, 2)), 3).parts.empty());
}

TEST_CASE("noise models") {
  std::mt19937_64 rng(7);
  const ImageD z = test::random_image(1, 8, 8, rng);
  for (const auto& m : {NoiseModel::none(), NoiseModel::gaussian(0.0), NoiseModel::poisson(0.0)}) {
    const ImageD y = apply_noise(m, z, rng);
    CHECK(std::equal(z.data().begin(), z.data().end(), y.data().begin()));
  }
  ImageD neg = z;
  neg.data()[3] = -0.1;
  CHECK_THROWS_AS(apply_noise(NoiseModel::poisson(0.02), neg, rng), PhysicsError);
  CHECK_THROWS(NoiseModel::gaussian(-1.0).validate());

  // Scaled Poisson and Gaussian moments over 1e5 draws, within 3 standard errors.
  const int n = 100000;
  const ImageD flat(1, 100, n / 100, 0.5);
  const ImageD yp = apply_noise(NoiseModel::poisson(0.02), flat, rng);
  double m1 = 0, m2 = 0;
  for (double v : yp.data()) m1 += v;
  m1 /= n;
  for (double v : yp.data()) m2 += (v - m1) * (v - m1);
  m2 /= n - 1;
  const double var = 0.02 * 0.5;
  CHECK(std::abs(m1 - 0.5) < 3 * std::sqrt(var / n));
  // Var of the sample variance for a Poisson-like law: (mu4 - var^2) / n.
  const double mu4 = var * var * (3 + 1 / (0.5 / 0.02));
  CHECK(std::abs(m2 - var) < 3 * std::sqrt((mu4 - var * var) / n));
  for (double v : yp.data()) CHECK(std::abs(v / 0.02 - std::round(v / 0.02)) < 1e-9);

  const ImageD yg = apply_noise(NoiseModel::gaussian(0.1), flat, rng);
  double g1 = 0, g2 = 0;
  for (double v : yg.data()) g1 += v;
  g1 /= n;
  for (double v : yg.data()) g2 += (v - g1) * (v - g1);
  g2 /= n - 1;
  CHECK(std::abs(g1 - 0.5) < 3 * 0.1 / std::sqrt(n));
  CHECK(std::abs(g2 - 0.01) < 3 * 0.01 * std::sqrt(2.0 / n));
}
