#pragma once

// Finite-difference checks of every autodiff primitive and every training
// loss, shared by the unit tests and the acceptance runner. Each check
// returns max_i |g_i - fd_i| / max(max_i |fd_i|, 1e-8).

#include <random>
#include <string>
#include <vector>

#include "pei/autodiff.hpp"
#include "pei/losses.hpp"
#include "pei/models.hpp"
#include "pei/physics.hpp"
#include "pei/projective.hpp"
#include "pei/warp.hpp"
#include "test_util.hpp"

namespace pei::test {

struct NamedError {
  std::string name;
  double error;
};

namespace detail {

using TD = ad::Tensor<double>;

// loss = sum(w * y) with fixed random w, so every output entry carries a
// distinct upstream gradient.
inline TD weighted_sum(ad::Tape<double>& tape, const TD& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = tape.constant(y.shape(), random_vector(y.shape().size(), rng));
  return ad::sum(ad::mul(w, y));
}

inline std::vector<TD> constants(ad::Tape<double>& tape, const Measurement<double>& y) {
  std::vector<TD> out;
  for (const auto& p : y.parts) out.push_back(tape.constant(p));
  return out;
}

/// Checks d loss / d theta for every network parameter.
template <typename F>
double model_gradient_error(ReconNet<double>& model, F loss, double h = 1e-6) {
  for (auto& p : model.parameters()) p.zero_grad();
  {
    ad::Tape<double> tape;
    tape.backward(loss(tape, model));
  }
  auto eval = [&] {
    ad::Tape<double> tape;
    return loss(tape, model).item();
  };
  double err = 0.0, scale = 1e-8;
  for (auto& p : model.parameters()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double v = p.value[i];
      p.value[i] = v + h;
      const double up = eval();
      p.value[i] = v - h;
      const double down = eval();
      p.value[i] = v;
      const double fd = (up - down) / (2.0 * h);
      err = std::max(err, std::abs(p.grad[i] - fd));
      scale = std::max(scale, std::abs(fd));
    }
  }
  return err / scale;
}

}  // namespace detail

inline std::vector<NamedError> primitive_gradient_errors(std::uint64_t seed) {
  using detail::TD;
  using detail::weighted_sum;
  std::mt19937_64 rng(seed);
  const ad::Shape s = ad::Shape::image(2, 3, 4);
  const auto x0 = away_from_zero(s.size(), rng);
  const auto other = random_vector(s.size(), rng);
  auto c = [&](ad::Tape<double>& t) { return t.constant(s, other); };

  std::vector<std::pair<std::string, ScalarFn>> cases = {
      {"add", [&](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::add(x, c(t)), 7); }},
      {"sub", [&](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::sub(c(t), x), 7); }},
      {"mul", [&](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::mul(x, c(t)), 7); }},
      {"mul(x, x)", [](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::mul(x, x), 7); }},
      {"scale", [](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::scale(x, -2.5), 7); }},
      {"relu", [](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::relu(x), 7); }},
      {"abs", [](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::abs(x), 7); }},
      {"square", [](ad::Tape<double>& t, const TD& x) { return weighted_sum(t, ad::square(x), 7); }},
      {"sqrt", [](ad::Tape<double>& t, const TD& x) {
         return weighted_sum(t, ad::sqrt(ad::square(x), 1e-3), 7);
       }},
      {"sum", [](ad::Tape<double>&, const TD& x) { return ad::sum(ad::square(x)); }},
      {"mean", [](ad::Tape<double>&, const TD& x) { return ad::mean(ad::mul(x, x)); }},
      {"mse", [&](ad::Tape<double>& t, const TD& x) { return ad::mse(x, c(t)); }},
      {"concat_channels", [](ad::Tape<double>& t, const TD& x) {
         return weighted_sum(t, ad::concat_channels(ad::scale(x, 2.0), ad::square(x)), 7);
       }},
      {"bilinear_upsample", [](ad::Tape<double>& t, const TD& x) {
         return weighted_sum(t, ad::bilinear_upsample(x, 3), 7);
       }},
  };
  for (auto pad : {ad::Padding::zero, ad::Padding::reflect}) {
    for (int k : {1, 3, 5}) {
      const std::string name = std::string("conv2d input k=") + std::to_string(k) +
                               (pad == ad::Padding::zero ? " zero" : " reflect");
      cases.emplace_back(name, [pad, k](ad::Tape<double>& t, const TD& x) {
        std::mt19937_64 r(11);
        auto w = t.constant(ad::Shape::filter(3, 2, k, k), random_vector(3 * 2 * k * k, r));
        auto b = t.constant(ad::Shape::vector(3), random_vector(3, r));
        return weighted_sum(t, ad::conv2d(x, w, b, pad), 7);
      });
    }
  }

  std::vector<NamedError> out;
  for (const auto& [name, fn] : cases) out.push_back({name, gradient_error(fn, s, x0)});

  const auto xin = random_vector(s.size(), rng);
  const auto w0 = random_vector(3 * 2 * 9, rng);
  const std::vector<double> b0{0.1, -0.2, 0.3};
  for (auto pad : {ad::Padding::zero, ad::Padding::reflect}) {
    const std::string suffix = pad == ad::Padding::zero ? " zero" : " reflect";
    out.push_back({"conv2d weight" + suffix,
                   gradient_error(
                       [&](ad::Tape<double>& t, const TD& w) {
                         auto b = t.constant(ad::Shape::vector(3), b0);
                         return weighted_sum(t, ad::conv2d(t.constant(s, xin), w, b, pad), 7);
                       },
                       ad::Shape::filter(3, 2, 3, 3), w0)});
    out.push_back({"conv2d bias" + suffix,
                   gradient_error(
                       [&](ad::Tape<double>& t, const TD& b) {
                         auto w = t.constant(ad::Shape::filter(3, 2, 3, 3), w0);
                         return weighted_sum(t, ad::conv2d(t.constant(s, xin), w, b, pad), 7);
                       },
                       ad::Shape::vector(3), b0)});
  }

  CameraIntrinsics k;
  k.focal = 6;
  k.u0 = 2;
  k.v0 = 1.5;
  const WarpTable table(camera_rotation_homography(k, EulerAngles{0.2, -0.3, 0.4}), 3, 4);
  const auto wm = warp_map<double>(table, 2);
  out.push_back({"linear_op", gradient_error(
                                  [&](ad::Tape<double>& t, const TD& x) {
                                    return weighted_sum(t, ad::linear_op(x, wm), 7);
                                  },
                                  s, x0)});
  return out;
}

/// Gradient checks of every loss with respect to the network parameters on
/// 8x8 instances.
inline std::vector<NamedError> loss_gradient_errors(std::uint64_t seed) {
  using detail::constants;
  using detail::model_gradient_error;
  std::mt19937_64 rng(seed);
  std::vector<NamedError> out;
  const int c = 2, n = 8;

  ReconNetConfig mc_cfg;
  mc_cfg.task = Task::inpainting;
  mc_cfg.channels = c;
  mc_cfg.hidden = 3;
  mc_cfg.blocks = 1;
  ReconNet<double> inp(mc_cfg);
  inp.initialize(rng);

  const ImageD x = random_image(c, n, n, rng, 0.1, 0.9);
  const InpaintingOperator mask = random_mask(0.5, n, n, rng);
  const OperatorMaps<double> imaps(mask, c, n, n);
  Measurement<double> y_clean{{inpaint_apply(mask, x)}};
  Measurement<double> y_gauss{{inpaint_apply(mask, apply_noise(NoiseModel::gaussian(0.05), x, rng))}};
  Measurement<double> y_pois{{inpaint_apply(mask, apply_noise(NoiseModel::poisson(0.02), x, rng))}};

  GroupSpec group;
  group.kind = TransformKind::perspective;
  group.range_fraction = 1.0;
  group.height = n;
  group.width = n;
  group.focal = 10;
  const WarpTable g(sample_transform(group, rng), n, n);

  out.push_back({"mc", model_gradient_error(inp, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   return mc_loss(imaps, m.forward(t, constants(t, y_clean)), y_clean);
                 })});
  out.push_back({"ei", model_gradient_error(inp, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   auto xh = m.forward(t, constants(t, y_clean));
                   return ei_loss(t, m, imaps, xh, g);
                 })});
  SureOptions opts;
  opts.probes = 2;
  out.push_back({"sure-gaussian", model_gradient_error(inp, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   std::mt19937_64 probe(99);
                   auto xh = m.forward(t, constants(t, y_gauss));
                   return sure_gaussian(t, m, imaps, xh, y_gauss, 0.05, probe, opts);
                 })});
  out.push_back({"sure-poisson", model_gradient_error(inp, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   std::mt19937_64 probe(99);
                   auto xh = m.forward(t, constants(t, y_pois));
                   return sure_poisson(t, m, imaps, xh, y_pois, 0.02, probe, opts);
                 })});
  out.push_back({"supervised", model_gradient_error(inp, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   return supervised_loss(m.forward(t, constants(t, y_clean)), x);
                 })});

  ReconNetConfig ps_cfg = mc_cfg;
  ps_cfg.task = Task::pansharpening;
  ps_cfg.factor = 2;
  ps_cfg.highpass_kernel = 3;
  ReconNet<double> pan(ps_cfg);
  pan.initialize(rng);
  const auto op = make_pansharpening(c, 2, 1.0, {0.6, 0.4});
  const OperatorMaps<double> pmaps(op, c, n, n);
  const Measurement<double> y_ps = pansharpen_apply(op, x);
  out.push_back({"mc (pansharpening)", model_gradient_error(pan, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   return mc_loss(pmaps, m.forward(t, constants(t, y_ps)), y_ps);
                 })});
  for (auto flavor : {TvFlavor::anisotropic, TvFlavor::isotropic}) {
    const std::string name = flavor == TvFlavor::anisotropic ? "tv (anisotropic)" : "tv (isotropic)";
    out.push_back({name, model_gradient_error(pan, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                     return tv_structural(m.forward(t, constants(t, y_ps)), y_ps.parts[1], op.srf, flavor);
                   })});
  }
  out.push_back({"ei (pansharpening)", model_gradient_error(pan, [&](ad::Tape<double>& t, ReconNet<double>& m) {
                   return ei_loss(t, m, pmaps, m.forward(t, constants(t, y_ps)), g);
                 })});
  return out;
}

}  // namespace pei::test
