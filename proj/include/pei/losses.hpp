#pragma once

// Training objectives. Every squared norm is a per-part mean (MSE
// convention), and multi-part measurements sum their per-part terms.

#include <array>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pei/autodiff.hpp"
#include "pei/models.hpp"
#include "pei/physics.hpp"
#include "pei/projective.hpp"
#include "pei/warp.hpp"

namespace pei {

/// The forward operator as differentiable linear maps, one per measurement
/// part, for images of a fixed C x H x W shape.
template <typename T>
class OperatorMaps {
 public:
  OperatorMaps(ForwardOperator op, int channels, int height, int width);

  const ForwardOperator& op() const { return op_; }
  Task task() const;
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t parts() const { return maps_.size(); }
  const ad::LinearMap<T>& map(std::size_t part) const { return maps_[part]; }

  std::vector<ad::Tensor<T>> apply(const ad::Tensor<T>& x) const;
  ad::Tensor<T> apply_part(const ad::Tensor<T>& x, std::size_t part) const;

 private:
  ForwardOperator op_;
  int channels_, height_, width_;
  std::vector<ad::LinearMap<T>> maps_;
};

template <typename T>
ad::LinearMap<T> warp_map(const WarpTable& table, int channels);
template <typename T>
ad::LinearMap<T> srf_map(const std::vector<double>& weights, int height, int width);

/// sum over parts of mean((A_p x - y_p)^2).
template <typename T>
ad::Tensor<T> mc_loss(const OperatorMaps<T>& maps, const ad::Tensor<T>& x_hat, const Measurement<T>& y);
template <typename T>
ad::Tensor<T> mc_loss_part(const OperatorMaps<T>& maps, const ad::Tensor<T>& x_hat,
                           const Measurement<T>& y, std::size_t part);

/// x2 = T_g x_hat, x3 = f(A x2), returns mean((x2 - x3)^2). Gradients flow
/// through both branches.
template <typename T>
ad::Tensor<T> ei_loss(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                      const ad::Tensor<T>& x_hat, const WarpTable& g);

struct SureOptions {
  int probes = 1;
  double tau = 0.0;  // finite-difference step; <= 0 selects 1e-3 * max|y|
};

/// Gaussian SURE of the measurement MSE, per part p with N_p entries and
/// m_p noisy entries:
///
///   (1/N_p) [ |h_p - y_p|^2 - m_p sigma^2 + 2 sigma^2 div_p ],   h = A f(y)
///
/// div_p is a Hutchinson estimate with +-1 probes b restricted to the noisy
/// entries: b_p . (h_p(y + tau b) - h_p(y)) / tau, averaged over probes.
template <typename T>
ad::Tensor<T> sure_gaussian(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                            const ad::Tensor<T>& x_hat, const Measurement<T>& y, double sigma,
                            std::mt19937_64& rng, const SureOptions& opts = {});

/// Poisson unbiased risk estimate for y = gamma * Poisson(z / gamma).
///
/// With lambda = z / gamma the identity E[lambda g(k)] = E[k g(k - 1)] gives
///   E[z_i h_i(y)] = E[y_i h_i(y - gamma e_i)] ~ E[y_i (h_i - gamma dh_i/dy_i)]
///   E[z_i^2]      = E[y_i^2 - gamma y_i]
/// so, per part,
///   (1/N_p) [ |h_p - y_p|^2 - gamma 1.y_p + 2 gamma sum_i y_i dh_i/dy_i ]
/// with the weighted divergence estimated as
///   sum_i b_i y_i (h(y + tau b) - h(y))_i / tau.
template <typename T>
ad::Tensor<T> sure_poisson(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                           const ad::Tensor<T>& x_hat, const Measurement<T>& y, double gamma,
                           std::mt19937_64& rng, const SureOptions& opts = {});

enum class TvFlavor { anisotropic, isotropic };

/// TV of d = R x_hat - y_pan with forward differences (zero past the last
/// row/column), normalized by H * W.
///   anisotropic: sum |dx| + |dy|
///   isotropic:   sum sqrt(dx^2 + dy^2 + eps)
template <typename T>
ad::Tensor<T> tv_structural(const ad::Tensor<T>& x_hat, const Image<T>& y_pan,
                            const std::vector<double>& srf, TvFlavor flavor = TvFlavor::anisotropic);

template <typename T>
ad::Tensor<T> supervised_loss(const ad::Tensor<T>& x_hat, const Image<T>& x);

/// Reduced-resolution training pair: both parts blurred and decimated by j
/// again, with the original MS image as target.
template <typename T>
struct WaldPair {
  Measurement<T> inputs;
  Image<T> target;
};

template <typename T>
WaldPair<T> wald_pair(const Measurement<T>& y, const PansharpeningOperator& op);

enum class LossTerm { mc, tv, ei, sure, supervised, wald };
inline constexpr std::size_t kLossTermCount = 6;

std::string_view to_string(LossTerm term);
LossTerm loss_term_from_string(std::string_view name);
/// "mc+tv+ei" -> {mc, tv, ei}. Throws ConfigError on unknown or repeated terms.
std::vector<LossTerm> parse_loss_terms(std::string_view spec);

struct LossConfig {
  std::vector<LossTerm> terms{LossTerm::mc};
  std::array<double, kLossTermCount> weights{1, 1, 1, 1, 1, 1};
  TvFlavor tv_flavor = TvFlavor::anisotropic;
  SureOptions sure;
  GroupSpec group;

  bool has(LossTerm t) const;
  double weight(LossTerm t) const { return weights[static_cast<std::size_t>(t)]; }
  /// Throws ConfigError on invalid combinations for the task.
  void validate(Task task) const;
};

template <typename T>
struct LossBreakdown {
  ad::Tensor<T> total;
  std::vector<std::pair<LossTerm, ad::Tensor<T>>> terms;  // unweighted values
};

/// Assembles the configured objective for one training sample.
///
/// Pansharpening: when tv is selected, mc covers only the MS part and tv
/// handles the PAN part. sure replaces both and covers all parts. The noise
/// model picks the SURE flavour (none behaves as sigma = 0).
/// `reference` is only needed by the supervised term.
template <typename T>
LossBreakdown<T> training_loss(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                               const Measurement<T>& y, const Image<T>* reference,
                               const NoiseModel& noise, const LossConfig& config,
                               std::mt19937_64& rng);

/// The full unsupervised pansharpening objective: MC(MS) + TV(PAN) + EI, or
/// SURE + EI when the noise model is not noiseless.
template <typename T>
ad::Tensor<T> pansharpen_unsup_loss(ad::Tape<T>& tape, ReconNet<T>& model, const OperatorMaps<T>& maps,
                                    const Measurement<T>& y, const NoiseModel& noise,
                                    const WarpTable& g, std::mt19937_64& rng,
                                    std::array<double, 3> weights = {1, 1, 1});

}  // namespace pei
