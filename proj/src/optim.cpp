#include "pei/optim.hpp"

#include <cmath>

namespace pei::ad {

template <typename T>
Adam<T>::Adam(AdamConfig config, std::vector<Parameter<T>*> params)
    : config_(config), params_(std::move(params)) {
  for (const auto* p : params_) {
    first_.emplace_back(p->value.size(), 0.0);
    second_.emplace_back(p->value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter<T>& p = *params_[k];
    if (p.grad.size() != p.value.size()) throw DimensionError("adam: gradient shape mismatch for " + p.name);
    auto& m = first_[k];
    auto& v = second_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]) + config_.weight_decay * p.value[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] = static_cast<T>(p.value[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double scheduled_learning_rate(double lr0, double decay, int epoch, int decay_every) {
  if (decay_every < 1) decay_every = 1;
  return lr0 * std::pow(decay, epoch / decay_every);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace pei::ad
