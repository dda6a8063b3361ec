#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lego/core/errors.hpp"

namespace lego::marl {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalised advantage estimation over one agent's time-ordered sequence.
/// `bootstrap` is V(s_T) after the last step; it is ignored when that step is terminal.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double bootstrap, double gamma, double lambda) {
  require(rewards.size() == values.size() && rewards.size() == dones.size(),
          "compute_gae: rewards, values and dones differ in length");
  require(gamma > 0.0 && gamma <= 1.0 && lambda >= 0.0 && lambda <= 1.0, "compute_gae: gamma/lambda out of range");
  const std::size_t n = rewards.size();
  GaeResult r{std::vector<double>(n), std::vector<double>(n)};
  double next_value = bootstrap, next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    r.advantages[k] = next_adv;
    r.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return r;
}

/// Shifts and scales to zero mean, unit (population) variance. A constant
/// batch becomes all zeros.
inline void normalize_advantages(std::vector<double>& a) {
  if (a.empty()) return;
  double mean = 0.0;
  for (double x : a) mean += x;
  mean /= static_cast<double>(a.size());
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(a.size()));
  for (double& x : a) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
}

}  // namespace lego::marl
