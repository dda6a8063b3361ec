#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "lego/nn/tensor.hpp"

namespace lego::check {

struct GradientReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

inline constexpr double kGradientFloor = 1e-5;

/// Relative discrepancy with an absolute floor so that exact zeros compare sanely.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradientFloor});
}

/// Compares reverse-mode gradients of `loss` with central finite differences
/// over every scalar in `store`.
inline GradientReport finite_difference_check(nn::ParameterStore<double>& store,
                                              const std::function<nn::Var<double>(nn::Tape<double>&)>& loss,
                                              double h = 1e-5) {
  store.zero_grad();
  {
    nn::Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    nn::Tape<double> tape(false);
    return loss(tape).value()(0, 0);
  };
  GradientReport report;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      const double original = p.value.data()[k];
      p.value.data()[k] = original + h;
      const double up = evaluate();
      p.value.data()[k] = original - h;
      const double down = evaluate();
      p.value.data()[k] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(p.grad.data()[k], numeric);
      ++report.checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = p.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return report;
}

}  // namespace lego::check
