#pragma once

#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pei/autodiff.hpp"
#include "pei/physics.hpp"

namespace pei {

enum class Task { inpainting, pansharpening };

std::string_view to_string(Task task);
Task task_from_string(std::string_view name);

struct ReconNetConfig {
  Task task = Task::inpainting;
  int channels = 3;          // image channels C
  int hidden = 16;
  int blocks = 4;
  int kernel_size = 3;
  int highpass_kernel = 11;  // pansharpening only
  int factor = 4;            // pansharpening only
  ad::Padding padding = ad::Padding::reflect;

  void validate() const;
};

/// Residual CNN f(y) = baseline(y) + CNN(features(y)).
///
/// Inpainting: baseline = y, features = y.
/// Pansharpening: baseline = bilinear_upsample(y_MS), features =
/// concat(baseline, highpass(y_PAN)) with highpass = I - box blur.
/// With every weight zero the network returns its baseline exactly.
template <typename T>
class ReconNet {
 public:
  explicit ReconNet(ReconNetConfig config);

  /// Fan-in scaled uniform weights, zero biases.
  void initialize(std::mt19937_64& rng);

  const ReconNetConfig& config() const { return config_; }
  std::vector<ad::Parameter<T>>& parameters() { return params_; }
  const std::vector<ad::Parameter<T>>& parameters() const { return params_; }
  std::vector<ad::Parameter<T>*> parameter_ptrs();
  std::size_t parameter_count() const;

  /// parts = {y} for inpainting, {y_MS, y_PAN} for pansharpening.
  ad::Tensor<T> forward(ad::Tape<T>& tape, const std::vector<ad::Tensor<T>>& parts);
  ad::Tensor<T> inpaint(ad::Tape<T>& tape, const ad::Tensor<T>& y);
  ad::Tensor<T> pansharpen(ad::Tape<T>& tape, const ad::Tensor<T>& ms, const ad::Tensor<T>& pan);

  /// Forward pass without keeping a tape around.
  Image<T> reconstruct(const Measurement<T>& y);

  template <typename U>
  ReconNet<U> cast() const {
    ReconNet<U> out(config_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& dst = out.parameters()[k].value;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<U>(params_[k].value[i]);
    }
    return out;
  }

 private:
  ad::Tensor<T> body(ad::Tape<T>& tape, const ad::Tensor<T>& features);
  ad::Tensor<T> conv(ad::Tape<T>& tape, const ad::Tensor<T>& x, std::size_t layer);

  ReconNetConfig config_;
  std::vector<ad::Parameter<T>> params_;  // (weight, bias) pairs in layer order
};

/// x - box(x) with reflection padding, on a single-channel H x W image.
template <typename T>
ad::LinearMap<T> highpass_map(int height, int width, int kernel_size);

}  // namespace pei
