#include "pei/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

namespace pei {

namespace {

template <typename T>
std::vector<ad::Tensor<T>> constants(ad::Tape<T>& tape, const Measurement<T>& y) {
  std::vector<ad::Tensor<T>> out;
  for (const auto& p : y.parts) out.push_back(tape.constant(p));
  return out;
}

template <typename T>
ad::Tensor<T> scalar(ad::Tape<T>& tape, double v) {
  return tape.constant(ad::Shape::scalar(), {static_cast<T>(v)});
}

template <typename T>
ad::Tensor<T> accumulate(const ad::Tensor<T>& acc, const ad::Tensor<T>& term) {
  return acc.valid() ? ad::add(acc, term) : term;
}

template <typename T>
void check_measurement(const OperatorMaps<T>& maps, const Measurement<T>& y) {
  if (y.parts.size() != maps.parts()) throw DimensionError("measurement has the wrong number of parts");
  for (std::size_t p = 0; p < y.parts.size(); ++p) {
    const auto& s = maps.map(p).out_shape;
    const auto& img = y.parts[p];
    if (img.channels() != s[0] || img.height() != s[1] || img.width() != s[2]) {
      throw DimensionError("measurement part does not match the operator");
    }
  }
}

// Shared Gaussian / Poisson SURE body. For Gaussian noise `param` is sigma and
// the divergence weights are the probes; for Poisson it is the gain and the
// weights are probes * y.
template <typename T>
ad::Tensor<T> sure_impl(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                        const ad::Tensor<T>& x_hat, const Measurement<T>& y, bool poisson, double param,
                        std::mt19937_64& rng, const SureOptions& opts) {
  if (opts.probes < 1) throw std::invalid_argument("SURE needs at least one probe");
  if (param < 0.0) throw std::invalid_argument("noise level must be nonnegative");
  check_measurement(maps, y);
  if (poisson) {
    for (const auto& p : y.parts) {
      for (T v : p.data()) {
        if (v < T(0)) throw PhysicsError("Poisson SURE requires nonnegative measurements");
      }
    }
  }
  const auto support = measurement_support(maps.op(), maps.channels());
  auto supported = [&](std::size_t p, std::size_t i) {
    return support.parts.empty() || support.parts[p].data()[i] != 0.0;
  };

  const auto h = maps.apply(x_hat);
  ad::Tensor<T> total;
  for (std::size_t p = 0; p < y.parts.size(); ++p) {
    const auto& yp = y.parts[p];
    const double n = static_cast<double>(yp.size());
    auto res = ad::scale(ad::sum(ad::square(ad::sub(h[p], tape.constant(yp)))), 1.0 / n);
    double offset = 0.0;
    if (poisson) {
      for (T v : yp.data()) offset += v;
      offset *= param;
    } else {
      double m = 0.0;
      for (std::size_t i = 0; i < yp.size(); ++i) m += supported(p, i) ? 1.0 : 0.0;
      offset = m * param * param;
    }
    total = accumulate(total, ad::add(res, scalar(tape, -offset / n)));
  }
  if (param == 0.0) return total;

  double ymax = 0.0;
  for (const auto& p : y.parts) {
    for (T v : p.data()) ymax = std::max(ymax, std::abs(static_cast<double>(v)));
  }
  const double tau = opts.tau > 0.0 ? opts.tau : 1e-3 * (ymax > 0.0 ? ymax : 1.0);
  const double coef = poisson ? 2.0 * param : 2.0 * param * param;

  for (int k = 0; k < opts.probes; ++k) {
    Measurement<T> perturbed = y;
    Measurement<T> weights = y;
    for (std::size_t p = 0; p < y.parts.size(); ++p) {
      auto yp = y.parts[p].data();
      auto pert = perturbed.parts[p].data();
      auto w = weights.parts[p].data();
      for (std::size_t i = 0; i < yp.size(); ++i) {
        const double b = !supported(p, i) ? 0.0 : ((rng() >> 32) & 1u) ? 1.0 : -1.0;
        pert[i] = static_cast<T>(yp[i] + tau * b);
        w[i] = static_cast<T>(poisson ? b * yp[i] : b);
      }
    }
    const auto xp = model.forward(tape, constants(tape, perturbed));
    const auto hp = maps.apply(xp);
    for (std::size_t p = 0; p < y.parts.size(); ++p) {
      const double n = static_cast<double>(y.parts[p].size());
      auto d = ad::sum(ad::mul(tape.constant(weights.parts[p]), ad::sub(hp[p], h[p])));
      total = ad::add(total, ad::scale(d, coef / (n * tau * opts.probes)));
    }
  }
  return total;
}

// 1 x H x W -> 2 x H x W forward differences, zero past the last column/row.
template <typename T>
ad::LinearMap<T> gradient_map(int height, int width) {
  ad::LinearMap<T> m;
  m.in_shape = ad::Shape::image(1, height, width);
  m.out_shape = ad::Shape::image(2, height, width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  m.forward = [=](const T* in, T* out) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * width + c;
        out[i] = c + 1 < width ? in[i + 1] - in[i] : T(0);
        out[plane + i] = r + 1 < height ? in[i + width] - in[i] : T(0);
      }
    }
  };
  m.adjoint = [=](const T* in, T* out) {
    std::fill(out, out + plane, T(0));
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * width + c;
        if (c + 1 < width) {
          out[i + 1] += in[i];
          out[i] -= in[i];
        }
        if (r + 1 < height) {
          out[i + width] += in[plane + i];
          out[i] -= in[plane + i];
        }
      }
    }
  };
  return m;
}

// C x H x W -> 1 x H x W channel sum.
template <typename T>
ad::LinearMap<T> channel_sum_map(int channels, int height, int width) {
  return srf_map<T>(std::vector<double>(static_cast<std::size_t>(channels), 1.0), height, width);
}

}  // namespace

template <typename T>
OperatorMaps<T>::OperatorMaps(ForwardOperator op, int channels, int height, int width)
    : op_(std::move(op)), channels_(channels), height_(height), width_(width) {
  const auto in_shape = ad::Shape::image(channels, height, width);
  if (const auto* in = std::get_if<InpaintingOperator>(&op_)) {
    if (in->height() != height || in->width() != width) throw DimensionError("mask does not match image size");
    std::vector<T> mask(in->mask.data().begin(), in->mask.data().end());
    const std::size_t plane = mask.size();
    auto apply = [mask, plane, channels](const T* src, T* dst) {
      for (int c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] = src[c * plane + i] * mask[i];
      }
    };
    maps_.push_back({in_shape, in_shape, apply, apply});
  } else {
    const auto& ps = std::get<PansharpeningOperator>(op_);
    ps.validate();
    if (ps.channels() != channels) throw DimensionError("SRF length does not match image channels");
    const int j = ps.factor;
    if (height % j != 0 || width % j != 0) throw DimensionError("image size must be divisible by the factor");
    ad::LinearMap<T> sr;
    sr.in_shape = in_shape;
    sr.out_shape = ad::Shape::image(channels, height / j, width / j);
    const Kernel2D kernel = ps.kernel;
    const std::size_t n_in = in_shape.size();
    const std::size_t n_out = sr.out_shape.size();
    sr.forward = [=](const T* src, T* dst) {
      auto x = Image<T>::from_values(channels, height, width, std::span<const T>(src, n_in));
      auto y = blur_downsample(x, kernel, j);
      std::copy(y.data().begin(), y.data().end(), dst);
    };
    sr.adjoint = [=](const T* src, T* dst) {
      auto v = Image<T>::from_values(channels, height / j, width / j,
                                     std::span<const T>(src, n_out));
      auto x = blur_downsample_adjoint(v, kernel, j);
      std::copy(x.data().begin(), x.data().end(), dst);
    };
    maps_.push_back(std::move(sr));
    maps_.push_back(srf_map<T>(ps.srf, height, width));
  }
}

template <typename T>
Task OperatorMaps<T>::task() const {
  return std::holds_alternative<InpaintingOperator>(op_) ? Task::inpainting : Task::pansharpening;
}

template <typename T>
std::vector<ad::Tensor<T>> OperatorMaps<T>::apply(const ad::Tensor<T>& x) const {
  std::vector<ad::Tensor<T>> out;
  for (const auto& m : maps_) out.push_back(ad::linear_op(x, m));
  return out;
}

template <typename T>
ad::Tensor<T> OperatorMaps<T>::apply_part(const ad::Tensor<T>& x, std::size_t part) const {
  return ad::linear_op(x, maps_.at(part));
}

template <typename T>
ad::LinearMap<T> warp_map(const WarpTable& table, int channels) {
  ad::LinearMap<T> m;
  m.in_shape = ad::Shape::image(channels, table.height(), table.width());
  m.out_shape = m.in_shape;
  auto t = std::make_shared<const WarpTable>(table);
  m.forward = [t, channels](const T* in, T* out) { t->apply(in, out, channels); };
  m.adjoint = [t, channels](const T* in, T* out) { t->adjoint(in, out, channels); };
  return m;
}

template <typename T>
ad::LinearMap<T> srf_map(const std::vector<double>& weights, int height, int width) {
  const int channels = static_cast<int>(weights.size());
  ad::LinearMap<T> m;
  m.in_shape = ad::Shape::image(channels, height, width);
  m.out_shape = ad::Shape::image(1, height, width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  m.forward = [=](const T* in, T* out) {
    std::fill(out, out + plane, T(0));
    for (int c = 0; c < channels; ++c) {
      const T w = static_cast<T>(weights[c]);
      for (std::size_t i = 0; i < plane; ++i) out[i] += w * in[c * plane + i];
    }
  };
  m.adjoint = [=](const T* in, T* out) {
    for (int c = 0; c < channels; ++c) {
      const T w = static_cast<T>(weights[c]);
      for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = w * in[i];
    }
  };
  return m;
}

template <typename T>
ad::Tensor<T> mc_loss_part(const OperatorMaps<T>& maps, const ad::Tensor<T>& x_hat,
                           const Measurement<T>& y, std::size_t part) {
  check_measurement(maps, y);
  auto* tape = x_hat.tape();
  return ad::mse(maps.apply_part(x_hat, part), tape->constant(y.parts.at(part)));
}

template <typename T>
ad::Tensor<T> mc_loss(const OperatorMaps<T>& maps, const ad::Tensor<T>& x_hat, const Measurement<T>& y) {
  ad::Tensor<T> total;
  for (std::size_t p = 0; p < maps.parts(); ++p) total = accumulate(total, mc_loss_part(maps, x_hat, y, p));
  return total;
}

template <typename T>
ad::Tensor<T> ei_loss(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                      const ad::Tensor<T>& x_hat, const WarpTable& g) {
  if (g.height() != maps.height() || g.width() != maps.width()) {
    throw DimensionError("transform table does not match image size");
  }
  auto x2 = ad::linear_op(x_hat, warp_map<T>(g, maps.channels()));
  auto x3 = model.forward(tape, maps.apply(x2));
  return ad::mse(x2, x3);
}

template <typename T>
ad::Tensor<T> sure_gaussian(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                            const ad::Tensor<T>& x_hat, const Measurement<T>& y, double sigma,
                            std::mt19937_64& rng, const SureOptions& opts) {
  return sure_impl(tape, model, maps, x_hat, y, false, sigma, rng, opts);
}

template <typename T>
ad::Tensor<T> sure_poisson(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                           const ad::Tensor<T>& x_hat, const Measurement<T>& y, double gamma,
                           std::mt19937_64& rng, const SureOptions& opts) {
  return sure_impl(tape, model, maps, x_hat, y, true, gamma, rng, opts);
}

template <typename T>
ad::Tensor<T> tv_structural(const ad::Tensor<T>& x_hat, const Image<T>& y_pan,
                            const std::vector<double>& srf, TvFlavor flavor) {
  const auto& s = x_hat.shape();
  if (s.rank != 3 || s[0] != static_cast<int>(srf.size())) throw DimensionError("SRF length mismatch");
  if (y_pan.channels() != 1 || y_pan.height() != s[1] || y_pan.width() != s[2]) {
    throw DimensionError("PAN image does not match reconstruction");
  }
  auto* tape = x_hat.tape();
  const int h = s[1];
  const int w = s[2];
  auto d = ad::sub(ad::linear_op(x_hat, srf_map<T>(srf, h, w)), tape->constant(y_pan));
  auto grad = ad::linear_op(d, gradient_map<T>(h, w));
  const double norm = 1.0 / (static_cast<double>(h) * w);
  if (flavor == TvFlavor::anisotropic) return ad::scale(ad::sum(ad::abs(grad)), norm);
  auto mag2 = ad::linear_op(ad::square(grad), channel_sum_map<T>(2, h, w));
  return ad::scale(ad::sum(ad::sqrt(mag2, 1e-12)), norm);
}

template <typename T>
ad::Tensor<T> supervised_loss(const ad::Tensor<T>& x_hat, const Image<T>& x) {
  return ad::mse(x_hat, x_hat.tape()->constant(x));
}

template <typename T>
WaldPair<T> wald_pair(const Measurement<T>& y, const PansharpeningOperator& op) {
  if (y.parts.size() != 2) throw DimensionError("Wald pairing needs {MS, PAN}");
  WaldPair<T> out;
  out.target = y.parts[0];
  if (op.factor == 1) {
    out.inputs = y;
    return out;
  }
  for (const auto& p : y.parts) {
    if (p.height() % op.factor != 0 || p.width() % op.factor != 0) {
      throw DimensionError("measurement size is not divisible by the factor");
    }
    out.inputs.parts.push_back(blur_downsample(p, op.kernel, op.factor));
  }
  return out;
}

std::string_view to_string(LossTerm term) {
  switch (term) {
    case LossTerm::mc: return "mc";
    case LossTerm::tv: return "tv";
    case LossTerm::ei: return "ei";
    case LossTerm::sure: return "sure";
    case LossTerm::supervised: return "supervised";
    case LossTerm::wald: return "wald";
  }
  return "?";
}

LossTerm loss_term_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kLossTermCount; ++i) {
    const auto t = static_cast<LossTerm>(i);
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown loss term: " + std::string(name));
}

std::vector<LossTerm> parse_loss_terms(std::string_view spec) {
  std::vector<LossTerm> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find('+', start), spec.size());
    const auto t = loss_term_from_string(spec.substr(start, end - start));
    if (std::find(out.begin(), out.end(), t) != out.end()) {
      throw ConfigError("loss term listed twice: " + std::string(to_string(t)));
    }
    out.push_back(t);
    start = end + 1;
  }
  return out;
}

bool LossConfig::has(LossTerm t) const { return std::find(terms.begin(), terms.end(), t) != terms.end(); }

void LossConfig::validate(Task task) const {
  if (terms.empty()) throw ConfigError("no loss terms selected");
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  }
  if (!has(LossTerm::mc) && !has(LossTerm::sure) && !has(LossTerm::supervised) && !has(LossTerm::wald)) {
    throw ConfigError("loss needs a consistency term (mc, sure, supervised or wald)");
  }
  if (has(LossTerm::mc) && has(LossTerm::sure)) throw ConfigError("mc and sure are alternatives");
  if (task != Task::pansharpening && (has(LossTerm::tv) || has(LossTerm::wald))) {
    throw ConfigError("tv and wald terms need the pansharpening task");
  }
  if (has(LossTerm::tv) && has(LossTerm::sure)) throw ConfigError("sure already covers the PAN part; drop tv");
  if (sure.probes < 1) throw ConfigError("sure_probes must be >= 1");
  try {
    group.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("group: ") + e.what());
  }
}

template <typename T>
LossBreakdown<T> training_loss(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                               const Measurement<T>& y, const Image<T>* reference,
                               const NoiseModel& noise, const LossConfig& config,
                               std::mt19937_64& rng) {
  const Task task = maps.task();
  std::optional<ad::Tensor<T>> x_hat;
  auto recon = [&]() -> const ad::Tensor<T>& {
    if (!x_hat) x_hat = model.forward(tape, constants(tape, y));
    return *x_hat;
  };

  LossBreakdown<T> out;
  for (LossTerm term : config.terms) {
    ad::Tensor<T> value;
    switch (term) {
      case LossTerm::mc:
        value = task == Task::pansharpening && config.has(LossTerm::tv) ? mc_loss_part(maps, recon(), y, 0)
                                                                         : mc_loss(maps, recon(), y);
        break;
      case LossTerm::tv: {
        const auto& ps = std::get<PansharpeningOperator>(maps.op());
        value = tv_structural(recon(), y.parts.at(1), ps.srf, config.tv_flavor);
        break;
      }
      case LossTerm::sure:
        if (noise.kind == NoiseModel::Kind::poisson) {
          value = sure_poisson(tape, model, maps, recon(), y, noise.gain, rng, config.sure);
        } else {
          const double sigma = noise.kind == NoiseModel::Kind::gaussian ? noise.sigma : 0.0;
          value = sure_gaussian(tape, model, maps, recon(), y, sigma, rng, config.sure);
        }
        break;
      case LossTerm::ei: {
        GroupSpec spec = config.group;
        spec.height = maps.height();
        spec.width = maps.width();
        const WarpTable g(sample_transform(spec, rng), spec.height, spec.width);
        value = ei_loss(tape, model, maps, recon(), g);
        break;
      }
      case LossTerm::supervised:
        if (reference == nullptr) throw ConfigError("supervised loss needs reference images");
        value = supervised_loss(recon(), *reference);
        break;
      case LossTerm::wald: {
        const auto pair = wald_pair(y, std::get<PansharpeningOperator>(maps.op()));
        auto pred = model.forward(tape, constants(tape, pair.inputs));
        value = ad::mse(pred, tape.constant(pair.target));
        break;
      }
    }
    out.terms.emplace_back(term, value);
    out.total = accumulate(out.total, ad::scale(value, config.weight(term)));
  }
  return out;
}

template <typename T>
ad::Tensor<T> pansharpen_unsup_loss(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                                    const Measurement<T>& y, const NoiseModel& noise,
                                    const WarpTable& g, std::mt19937_64& rng,
                                    std::array<double, 3> weights) {
  if (maps.task() != Task::pansharpening) throw std::logic_error("pansharpening loss on another task");
  const auto& ps = std::get<PansharpeningOperator>(maps.op());
  auto x_hat = model.forward(tape, constants(tape, y));
  ad::Tensor<T> data;
  if (noise.noiseless()) {
    data = ad::add(ad::scale(mc_loss_part(maps, x_hat, y, 0), weights[0]),
                   ad::scale(tv_structural(x_hat, y.parts[1], ps.srf), weights[1]));
  } else if (noise.kind == NoiseModel::Kind::poisson) {
    data = ad::scale(sure_poisson(tape, model, maps, x_hat, y, noise.gain, rng), weights[0]);
  } else {
    data = ad::scale(sure_gaussian(tape, model, maps, x_hat, y, noise.sigma, rng), weights[0]);
  }
  return ad::add(data, ad::scale(ei_loss(tape, model, maps, x_hat, g), weights[2]));
}

#define PEI_INSTANTIATE_LOSSES(T)                                                                       \
  template class OperatorMaps<T>;                                                                       \
  template ad::LinearMap<T> warp_map(const WarpTable&, int);                                            \
  template ad::LinearMap<T> srf_map(const std::vector<double>&, int, int);                              \
  template ad::Tensor<T> mc_loss(const OperatorMaps<T>&, const ad::Tensor<T>&, const Measurement<T>&);  \
  template ad::Tensor<T> mc_loss_part(const OperatorMaps<T>&, const ad::Tensor<T>&, const Measurement<T>&, \
                                      std::size_t);                                                     \
  template ad::Tensor<T> ei_loss(ad::Tape<T>&, ReconNet<T>&, const OperatorMaps<T>&, const ad::Tensor<T>&, \
                                 const WarpTable&);                                                     \
  template ad::Tensor<T> sure_gaussian(ad::Tape<T>&, ReconNet<T>&, const OperatorMaps<T>&,              \
                                       const ad::Tensor<T>&, const Measurement<T>&, double,             \
                                       std::mt19937_64&, const SureOptions&);                           \
  template ad::Tensor<T> sure_poisson(ad::Tape<T>&, ReconNet<T>&, const OperatorMaps<T>&,               \
                                      const ad::Tensor<T>&, const Measurement<T>&, double,              \
                                      std::mt19937_64&, const SureOptions&);                            \
  template ad::Tensor<T> tv_structural(const ad::Tensor<T>&, const Image<T>&, const std::vector<double>&, \
                                       TvFlavor);                                                       \
  template ad::Tensor<T> supervised_loss(const ad::Tensor<T>&, const Image<T>&);                        \
  template WaldPair<T> wald_pair(const Measurement<T>&, const PansharpeningOperator&);                   \
  template LossBreakdown<T> training_loss(ad::Tape<T>&, ReconNet<T>&, const OperatorMaps<T>&,           \
                                          const Measurement<T>&, const Image<T>*, const NoiseModel&,    \
                                          const LossConfig&, std::mt19937_64&);                         \
  template ad::Tensor<T> pansharpen_unsup_loss(ad::Tape<T>&, ReconNet<T>&, const OperatorMaps<T>&,      \
                                               const Measurement<T>&, const NoiseModel&, const WarpTable&, \
                                               std::mt19937_64&, std::array<double, 3>);

PEI_INSTANTIATE_LOSSES(float)
PEI_INSTANTIATE_LOSSES(double)

}  // namespace pei
