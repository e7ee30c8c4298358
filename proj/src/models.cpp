#include "pei/models.hpp"

#include <cmath>
#include <memory>

namespace pei {

std::string_view to_string(Task task) {
  return task == Task::inpainting ? "inpainting" : "pansharpening";
}

Task task_from_string(std::string_view name) {
  if (name == "inpainting") return Task::inpainting;
  if (name == "pansharpening") return Task::pansharpening;
  throw std::invalid_argument("unknown task: " + std::string(name));
}

void ReconNetConfig::validate() const {
  if (channels < 1 || hidden < 1 || blocks < 1) {
    throw std::invalid_argument("model needs channels >= 1, hidden >= 1, blocks >= 1");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
  if (task == Task::pansharpening) {
    if (highpass_kernel < 1 || highpass_kernel % 2 == 0) {
      throw std::invalid_argument("highpass_kernel must be odd");
    }
    if (factor < 1) throw std::invalid_argument("upsampling factor must be >= 1");
  }
}

template <typename T>
ReconNet<T>::ReconNet(ReconNetConfig config) : config_(config) {
  config_.validate();
  const int k = config_.kernel_size;
  const int in = config_.task == Task::pansharpening ? config_.channels + 1 : config_.channels;
  auto add_conv = [&](const std::string& name, int cout, int cin) {
    params_.emplace_back(name + ".weight", ad::Shape::filter(cout, cin, k, k));
    params_.emplace_back(name + ".bias", ad::Shape::vector(cout));
  };
  add_conv("head", config_.hidden, in);
  for (int b = 0; b < config_.blocks; ++b) {
    add_conv("block" + std::to_string(b) + ".conv1", config_.hidden, config_.hidden);
    add_conv("block" + std::to_string(b) + ".conv2", config_.hidden, config_.hidden);
  }
  add_conv("tail", config_.channels, config_.hidden);
}

template <typename T>
void ReconNet<T>::initialize(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < params_.size(); i += 2) {
    auto& w = params_[i];
    const double fan_in = static_cast<double>(w.shape[1]) * w.shape[2] * w.shape[3];
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (T& v : w.value) v = static_cast<T>(u(rng));
    std::fill(params_[i + 1].value.begin(), params_[i + 1].value.end(), T(0));
  }
}

template <typename T>
std::vector<ad::Parameter<T>*> ReconNet<T>::parameter_ptrs() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t ReconNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
ad::Tensor<T> ReconNet<T>::conv(ad::Tape<T>& tape, const ad::Tensor<T>& x, std::size_t layer) {
  auto w = tape.parameter(params_[2 * layer]);
  auto b = tape.parameter(params_[2 * layer + 1]);
  return ad::conv2d(x, w, b, config_.padding);
}

template <typename T>
ad::Tensor<T> ReconNet<T>::body(ad::Tape<T>& tape, const ad::Tensor<T>& features) {
  std::size_t layer = 0;
  auto h = ad::relu(conv(tape, features, layer++));
  for (int b = 0; b < config_.blocks; ++b) {
    auto r = ad::relu(conv(tape, h, layer++));
    r = conv(tape, r, layer++);
    h = ad::add(h, r);
  }
  return conv(tape, h, layer);
}

template <typename T>
ad::Tensor<T> ReconNet<T>::inpaint(ad::Tape<T>& tape, const ad::Tensor<T>& y) {
  if (config_.task != Task::inpainting) throw std::logic_error("model is not configured for inpainting");
  if (y.shape().rank != 3 || y.shape()[0] != config_.channels) {
    throw DimensionError("inpainting input " + y.shape().str() + " does not match model channels");
  }
  return ad::add(y, body(tape, y));
}

template <typename T>
ad::Tensor<T> ReconNet<T>::pansharpen(ad::Tape<T>& tape, const ad::Tensor<T>& ms, const ad::Tensor<T>& pan) {
  if (config_.task != Task::pansharpening) throw std::logic_error("model is not configured for pansharpening");
  const auto sm = ms.shape();
  const auto sp = pan.shape();
  if (sm.rank != 3 || sp.rank != 3 || sm[0] != config_.channels || sp[0] != 1) {
    throw DimensionError("pansharpening inputs " + sm.str() + ", " + sp.str() + " do not match model");
  }
  if (sp[1] != sm[1] * config_.factor || sp[2] != sm[2] * config_.factor) {
    throw DimensionError("PAN size must be the MS size times the resolution factor");
  }
  auto up = ad::bilinear_upsample(ms, config_.factor);
  auto hp = ad::linear_op(pan, highpass_map<T>(sp[1], sp[2], config_.highpass_kernel));
  return ad::add(up, body(tape, ad::concat_channels(up, hp)));
}

template <typename T>
ad::Tensor<T> ReconNet<T>::forward(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& parts) {
  if (config_.task == Task::inpainting) {
    if (parts.size() != 1) throw DimensionError("inpainting expects a single measurement part");
    return inpaint(tape, parts[0]);
  }
  if (parts.size() != 2) throw DimensionError("pansharpening expects {MS, PAN}");
  return pansharpen(tape, parts[0], parts[1]);
}

template <typename T>
Image<T> ReconNet<T>::reconstruct(const Measurement<T>& y) {
  ad::Tape<T> tape;
  std::vector<ad::Tensor<T>> parts;
  for (const auto& p : y.parts) parts.push_back(tape.constant(p));
  return forward(tape, parts).image();
}

template <typename T>
ad::LinearMap<T> highpass_map(int height, int width, int kernel_size) {
  const Kernel2D box = box_kernel(kernel_size);
  ad::LinearMap<T> m;
  m.in_shape = ad::Shape::image(1, height, width);
  m.out_shape = m.in_shape;
  const std::size_t n = m.in_shape.size();
  m.forward = [=](const T* in, T* out) {
    auto x = Image<T>::from_values(1, height, width, std::span<const T>(in, n));
    auto blurred = filter_decimate(x, box, 1);
    auto b = blurred.data();
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = in[i] - b[i];
  };
  m.adjoint = [=](const T* in, T* out) {
    auto v = Image<T>::from_values(1, height, width, std::span<const T>(in, n));
    auto bt = filter_decimate_adjoint(v, box, 1, height, width);
    auto b = bt.data();
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = in[i] - b[i];
  };
  return m;
}

template class ReconNet<float>;
template class ReconNet<double>;
template ad::LinearMap<float> highpass_map(int, int, int);
template ad::LinearMap<double> highpass_map(int, int, int);

}  // namespace pei
