#pragma once

#include <vector>

#include "pei/autodiff.hpp"

namespace pei::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-8;  // L2 coefficient, added to the gradient
};

/// Adam with an L2 penalty folded into the gradient (g + lambda * w).
template <typename T>
class Adam {
 public:
  Adam(AdamConfig config, std::vector<Parameter<T>*> params);

  /// One update from the gradients currently stored in the parameters.
  void step();
  void zero_grad();

  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  long steps_ = 0;
};

/// lr0 * decay^floor(epoch / decay_every).
double scheduled_learning_rate(double lr0, double decay, int epoch, int decay_every = 1);

}  // namespace pei::ad
