#pragma once

// Dot tests <A x, v> = <x, A^T v> for the linear operators, on random
// instances with random sizes. Errors are |lhs - rhs| / max(|lhs|, |rhs|).

#include <algorithm>
#include <cmath>
#include <random>

#include "pei/physics.hpp"
#include "pei/projective.hpp"
#include "pei/warp.hpp"
#include "test_util.hpp"

namespace pei::test {

inline double dot_error(double lhs, double rhs) {
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
}

inline double measurement_dot(const Measurement<double>& a, const Measurement<double>& b) {
  double s = 0.0;
  for (std::size_t p = 0; p < a.parts.size(); ++p) s += dot(a.parts[p], b.parts[p]);
  return s;
}

struct AdjointErrors {
  double warp = 0.0;
  double blur_downsample = 0.0;
  double srf = 0.0;
  double mask = 0.0;
  double pansharpening = 0.0;  // stacked {A_SR, R}
};

inline AdjointErrors adjoint_errors(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(8, 40), chans(1, 5), factor(1, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AdjointErrors e;
  for (int i = 0; i < instances; ++i) {
    const int c = chans(rng), h = size(rng), w = size(rng);
    const ImageD x = random_image(c, h, w, rng, -1, 1);

    GroupSpec spec;
    spec.kind = TransformKind::perspective;
    spec.range_fraction = unit(rng);
    spec.height = h;
    spec.width = w;
    spec.focal = 0.8 * std::max(h, w);
    const WarpTable t(sample_transform(spec, rng), h, w);
    const ImageD v = random_image(c, h, w, rng, -1, 1);
    e.warp = std::max(e.warp, dot_error(dot(t.apply(x), v), dot(x, t.adjoint(v))));

    const InpaintingOperator m = random_mask(unit(rng), h, w, rng);
    e.mask = std::max(e.mask, dot_error(dot(inpaint_apply(m, x), v), dot(x, inpaint_apply(m, v))));

    std::vector<double> srf(static_cast<std::size_t>(c));
    double total = 0.0;
    for (double& s : srf) total += s = unit(rng) + 0.05;
    for (double& s : srf) s /= total;
    const ImageD vp = random_image(1, h, w, rng, -1, 1);
    e.srf = std::max(e.srf, dot_error(dot(srf_apply(srf, x), vp), dot(x, srf_adjoint(srf, vp))));

    const int j = factor(rng);
    const int hj = h - h % j, wj = w - w % j;
    const ImageD xj = random_image(c, hj, wj, rng, -1, 1);
    const auto op = make_pansharpening(c, j, 0.5 + 1.5 * unit(rng), srf);
    const ImageD vl = random_image(c, hj / j, wj / j, rng, -1, 1);
    e.blur_downsample =
        std::max(e.blur_downsample, dot_error(dot(blur_downsample(xj, op.kernel, j), vl),
                                              dot(xj, blur_downsample_adjoint(vl, op.kernel, j))));

    const Measurement<double> mv{{vl, random_image(1, hj, wj, rng, -1, 1)}};
    e.pansharpening = std::max(e.pansharpening, dot_error(measurement_dot(pansharpen_apply(op, xj), mv),
                                                          dot(xj, pansharpen_adjoint(op, mv))));
  }
  return e;
}

}  // namespace pei::test
