#include "pei/physics.hpp"

#include <cmath>
#include <numeric>

#include "pei/warp.hpp"

namespace pei {

double Kernel2D::sum() const { return std::accumulate(taps.begin(), taps.end(), 0.0); }

int default_mtf_kernel_size(double sigma) {
  int size = static_cast<int>(std::ceil(8.0 * sigma + 1.0));
  if (size % 2 == 0) ++size;
  return size;
}

Kernel2D gaussian_mtf_kernel(double sigma, int size) {
  if (!(sigma > 0.0)) throw std::invalid_argument("MTF sigma must be positive");
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("MTF kernel size must be odd");
  Kernel2D k;
  k.size = size;
  k.taps.assign(static_cast<std::size_t>(size) * size, 0.0);
  const int half = size / 2;
  double total = 0.0;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dr = r - half;
      const double dc = c - half;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      k.taps[static_cast<std::size_t>(r) * size + c] = v;
      total += v;
    }
  }
  for (double& v : k.taps) v /= total;
  return k;
}

Kernel2D box_kernel(int size) {
  if (size < 1 || size % 2 == 0) throw std::invalid_argument("box kernel size must be odd");
  Kernel2D k;
  k.size = size;
  k.taps.assign(static_cast<std::size_t>(size) * size, 1.0 / (static_cast<double>(size) * size));
  return k;
}

namespace {

// For output sample o along an axis of length n: source index of tap t.
std::vector<int> tap_table(int n_out, int n_in, int stride, int ksize) {
  const int half = ksize / 2;
  std::vector<int> table(static_cast<std::size_t>(n_out) * ksize);
  for (int o = 0; o < n_out; ++o) {
    for (int t = 0; t < ksize; ++t) {
      table[static_cast<std::size_t>(o) * ksize + t] = reflect_index(o * stride + t - half, n_in);
    }
  }
  return table;
}

void check_decimation(int height, int width, int stride, const char* what) {
  if (stride < 1) throw std::invalid_argument(std::string(what) + ": factor must be >= 1");
  if (height % stride != 0 || width % stride != 0) {
    throw DimensionError(std::string(what) + ": image size not divisible by factor");
  }
}

}  // namespace

template <typename T>
Image<T> filter_decimate(const Image<T>& x, const Kernel2D& k, int stride) {
  check_decimation(x.height(), x.width(), stride, "filter_decimate");
  const int ho = x.height() / stride;
  const int wo = x.width() / stride;
  const int ks = k.size;
  const auto rows = tap_table(ho, x.height(), stride, ks);
  const auto cols = tap_table(wo, x.width(), stride, ks);
  Image<T> out(x.channels(), ho, wo);
  for (int c = 0; c < x.channels(); ++c) {
    auto src = x.channel(c);
    auto dst = out.channel(c);
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (int r = 0; r < ks; ++r) {
          const T* row = src.data() + static_cast<std::size_t>(rows[i * ks + r]) * x.width();
          const double* kr = k.taps.data() + static_cast<std::size_t>(r) * ks;
          const int* cj = cols.data() + static_cast<std::size_t>(j) * ks;
          for (int s = 0; s < ks; ++s) acc += kr[s] * row[cj[s]];
        }
        dst[static_cast<std::size_t>(i) * wo + j] = static_cast<T>(acc);
      }
    }
  }
  return out;
}

template <typename T>
Image<T> filter_decimate_adjoint(const Image<T>& v, const Kernel2D& k, int stride, int height,
                                 int width) {
  check_decimation(height, width, stride, "filter_decimate_adjoint");
  const int ho = height / stride;
  const int wo = width / stride;
  if (v.height() != ho || v.width() != wo) {
    throw DimensionError("filter_decimate_adjoint: input size mismatch");
  }
  const int ks = k.size;
  const auto rows = tap_table(ho, height, stride, ks);
  const auto cols = tap_table(wo, width, stride, ks);
  Image<T> out(v.channels(), height, width);
  std::vector<double> acc(static_cast<std::size_t>(height) * width);
  for (int c = 0; c < v.channels(); ++c) {
    std::fill(acc.begin(), acc.end(), 0.0);
    auto src = v.channel(c);
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        const double g = src[static_cast<std::size_t>(i) * wo + j];
        if (g == 0.0) continue;
        for (int r = 0; r < ks; ++r) {
          double* row = acc.data() + static_cast<std::size_t>(rows[i * ks + r]) * width;
          const double* kr = k.taps.data() + static_cast<std::size_t>(r) * ks;
          const int* cj = cols.data() + static_cast<std::size_t>(j) * ks;
          for (int s = 0; s < ks; ++s) row[cj[s]] += kr[s] * g;
        }
      }
    }
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
  }
  return out;
}

double InpaintingOperator::kept_fraction() const {
  auto d = mask.data();
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

InpaintingOperator random_mask(double p, int height, int width, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("masked fraction must lie in [0, 1)");
  InpaintingOperator op;
  op.masked_fraction = p;
  op.mask = ImageD(1, height, width);
  std::bernoulli_distribution keep(1.0 - p);
  for (double& v : op.mask.data()) v = keep(rng) ? 1.0 : 0.0;
  return op;
}

template <typename T>
Image<T> inpaint_apply(const InpaintingOperator& op, const Image<T>& x) {
  if (x.height() != op.height() || x.width() != op.width()) {
    throw DimensionError("inpaint_apply: mask and image sizes differ");
  }
  Image<T> out = x;
  auto m = op.mask.data();
  for (int c = 0; c < x.channels(); ++c) {
    auto ch = out.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (m[i] == 0.0) ch[i] = T(0);
    }
  }
  return out;
}

void PansharpeningOperator::validate() const {
  if (factor < 1) throw std::invalid_argument("downsampling factor must be >= 1");
  if (kernel.size < 1 || kernel.size % 2 == 0) throw std::invalid_argument("MTF kernel must be odd");
  if (std::abs(kernel.sum() - 1.0) > 1e-9) throw std::invalid_argument("MTF kernel must sum to 1");
  if (srf.empty()) throw std::invalid_argument("SRF must have at least one weight");
  double total = 0.0;
  for (double w : srf) {
    if (w < 0.0) throw std::invalid_argument("SRF weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("SRF weights must sum to 1");
}

std::vector<double> flat_srf(int channels) {
  if (channels < 1) throw std::invalid_argument("SRF needs at least one channel");
  return std::vector<double>(channels, 1.0 / channels);
}

PansharpeningOperator make_pansharpening(int channels, int factor, double mtf_sigma,
                                         std::vector<double> srf) {
  PansharpeningOperator op;
  op.factor = factor;
  op.kernel = gaussian_mtf_kernel(mtf_sigma, default_mtf_kernel_size(mtf_sigma));
  op.srf = std::move(srf);
  if (op.channels() != channels) throw DimensionError("SRF length does not match channel count");
  op.validate();
  return op;
}

PansharpeningOperator make_pansharpening(int channels, int factor) {
  return make_pansharpening(channels, factor, static_cast<double>(factor), flat_srf(channels));
}

template <typename T>
Image<T> blur_downsample(const Image<T>& x, const Kernel2D& k, int factor) {
  return filter_decimate(x, k, factor);
}

template <typename T>
Image<T> blur_downsample_adjoint(const Image<T>& v, const Kernel2D& k, int factor) {
  return filter_decimate_adjoint(v, k, factor, v.height() * factor, v.width() * factor);
}

template <typename T>
Image<T> srf_apply(const std::vector<double>& weights, const Image<T>& x) {
  if (static_cast<int>(weights.size()) != x.channels()) {
    throw DimensionError("srf_apply: weight count does not match channels");
  }
  Image<T> out(1, x.height(), x.width());
  std::vector<double> acc(x.plane_size(), 0.0);
  for (int c = 0; c < x.channels(); ++c) {
    auto ch = x.channel(c);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[c] * ch[i];
  }
  auto dst = out.data();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
  return out;
}

template <typename T>
Image<T> srf_adjoint(const std::vector<double>& weights, const Image<T>& v) {
  if (v.channels() != 1) throw DimensionError("srf_adjoint: expected a single-channel image");
  Image<T> out(static_cast<int>(weights.size()), v.height(), v.width());
  auto src = v.data();
  for (int c = 0; c < out.channels(); ++c) {
    auto ch = out.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] = static_cast<T>(weights[c] * src[i]);
  }
  return out;
}

template <typename T>
Measurement<T> pansharpen_apply(const PansharpeningOperator& op, const Image<T>& x) {
  if (x.channels() != op.channels()) throw DimensionError("pansharpen_apply: channel mismatch");
  Measurement<T> y;
  y.parts.push_back(blur_downsample(x, op.kernel, op.factor));
  y.parts.push_back(srf_apply(op.srf, x));
  return y;
}

template <typename T>
Image<T> pansharpen_adjoint(const PansharpeningOperator& op, const Measurement<T>& v) {
  if (v.parts.size() != 2) throw DimensionError("pansharpen_adjoint: expected {MS, PAN}");
  Image<T> out = blur_downsample_adjoint(v.parts[0], op.kernel, op.factor);
  Image<T> pan = srf_adjoint(op.srf, v.parts[1]);
  require_same_shape(out, pan, "pansharpen_adjoint");
  auto d = out.data();
  auto p = pan.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += p[i];
  return out;
}

template <typename T>
Measurement<T> forward_apply(const ForwardOperator& op, const Image<T>& x) {
  if (const auto* in = std::get_if<InpaintingOperator>(&op)) {
    Measurement<T> y;
    y.parts.push_back(inpaint_apply(*in, x));
    return y;
  }
  return pansharpen_apply(std::get<PansharpeningOperator>(op), x);
}

template <typename T>
Image<T> forward_adjoint(const ForwardOperator& op, const Measurement<T>& v) {
  if (const auto* in = std::get_if<InpaintingOperator>(&op)) {
    if (v.parts.size() != 1) throw DimensionError("inpainting measurement has one part");
    return inpaint_apply(*in, v.parts[0]);
  }
  return pansharpen_adjoint(std::get<PansharpeningOperator>(op), v);
}

Measurement<double> measurement_support(const ForwardOperator& op, int channels) {
  Measurement<double> s;
  if (const auto* in = std::get_if<InpaintingOperator>(&op)) {
    ImageD m(channels, in->height(), in->width());
    for (int c = 0; c < channels; ++c) {
      auto src = in->mask.data();
      auto dst = m.channel(c);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    s.parts.push_back(std::move(m));
  }
  return s;
}

void NoiseModel::validate() const {
  if (sigma < 0.0 || gain < 0.0) throw std::invalid_argument("noise parameters must be nonnegative");
}

ImageD apply_noise(const NoiseModel& model, const ImageD& z, std::mt19937_64& rng) {
  model.validate();
  ImageD y = z;
  switch (model.kind) {
    case NoiseModel::Kind::none:
      break;
    case NoiseModel::Kind::gaussian: {
      if (model.sigma == 0.0) break;
      std::normal_distribution<double> n(0.0, model.sigma);
      for (double& v : y.data()) v += n(rng);
      break;
    }
    case NoiseModel::Kind::poisson: {
      for (double v : z.data()) {
        if (v < 0.0) throw PhysicsError("Poisson noise requires nonnegative intensities");
      }
      if (model.gain == 0.0) break;
      for (double& v : y.data()) {
        const double rate = v / model.gain;
        if (rate == 0.0) continue;
        std::poisson_distribution<long long> p(rate);
        v = model.gain * static_cast<double>(p(rng));
      }
      break;
    }
  }
  return y;
}

#define PEI_INSTANTIATE(T)                                                                     \
  template Image<T> filter_decimate(const Image<T>&, const Kernel2D&, int);                   \
  template Image<T> filter_decimate_adjoint(const Image<T>&, const Kernel2D&, int, int, int); \
  template Image<T> inpaint_apply(const InpaintingOperator&, const Image<T>&);               \
  template Image<T> blur_downsample(const Image<T>&, const Kernel2D&, int);                   \
  template Image<T> blur_downsample_adjoint(const Image<T>&, const Kernel2D&, int);           \
  template Image<T> srf_apply(const std::vector<double>&, const Image<T>&);                   \
  template Image<T> srf_adjoint(const std::vector<double>&, const Image<T>&);                 \
  template Measurement<T> pansharpen_apply(const PansharpeningOperator&, const Image<T>&);    \
  template Image<T> pansharpen_adjoint(const PansharpeningOperator&, const Measurement<T>&);  \
  template Measurement<T> forward_apply(const ForwardOperator&, const Image<T>&);             \
  template Image<T> forward_adjoint(const ForwardOperator&, const Measurement<T>&);

PEI_INSTANTIATE(float)
PEI_INSTANTIATE(double)

#undef PEI_INSTANTIATE

}  // namespace pei
