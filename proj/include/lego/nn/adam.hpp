#pragma once

#include <cmath>

#include "lego/nn/tensor.hpp"

namespace lego::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive moment estimation with bias correction.
template <class S>
class Adam {
 public:
  explicit Adam(const ParameterStore<S>& store, AdamConfig config = {}) : config_(config) {
    store.for_each([&](const Parameter<S>& p) {
      first_.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
      second_.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
    });
  }

  void step(ParameterStore<S>& store, double learning_rate) {
    require(store.size() == first_.size(), "optimizer bound to a different parameter store");
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const S b1 = static_cast<S>(config_.beta1), b2 = static_cast<S>(config_.beta2);
    const S step = static_cast<S>(learning_rate / c1);
    const S inv_c2 = static_cast<S>(1.0 / c2);
    const S eps = static_cast<S>(config_.epsilon);
    for (std::size_t i = 0; i < store.size(); ++i) {
      auto& p = store[i];
      first_[i] = b1 * first_[i] + (S(1) - b1) * p.grad;
      second_[i] = b2 * second_[i] + (S(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step * first_[i].array() / ((second_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  long steps() const { return steps_; }

 private:
  AdamConfig config_;
  std::vector<Matrix<S>> first_, second_;
  long steps_ = 0;
};

template <class S>
double gradient_norm(const ParameterStore<S>& store) {
  double total = 0.0;
  store.for_each([&](const Parameter<S>& p) { total += static_cast<double>(p.grad.squaredNorm()); });
  return std::sqrt(total);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
template <class S>
double clip_gradient_norm(ParameterStore<S>& store, double max_norm) {
  const double norm = gradient_norm(store);
  if (norm > max_norm && norm > 0.0) {
    const S factor = static_cast<S>(max_norm / norm);
    store.for_each([&](Parameter<S>& p) { p.grad *= factor; });
  }
  return norm;
}

}  // namespace lego::nn
