#pragma once

#include <cstdint>
#include <string>

#include "lego/core/errors.hpp"

namespace lego::marl {

struct TrainConfig {
  long total_steps = 200000;   // environment steps, summed over parallel envs
  int envs = 25;               // episodes collected per update
  int rollout_length = 0;      // steps per env per update; 0 = scenario horizon
  int ppo_epochs = 10;
  int minibatches = 4;
  double clip = 0.2;
  double learning_rate = 5e-4;
  bool lr_decay = true;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  bool value_clip = false;
  double max_grad_norm = 0.5;
  double gamma = 0.99;
  double lambda = 0.95;
  int eval_interval = 10;      // updates between greedy evaluations; 0 disables
  int eval_episodes = 10;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("train: " + m); };
    if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must lie in [0, 1]");
    if (!(clip > 0.0)) fail("clip must be positive");
    if (total_steps <= 0) fail("total_steps must be positive");
    if (envs <= 0) fail("envs must be positive");
    if (rollout_length < 0) fail("rollout_length must be non-negative");
    if (ppo_epochs <= 0 || minibatches <= 0) fail("ppo_epochs and minibatches must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
    if (entropy_coef < 0.0 || value_coef < 0.0) fail("loss coefficients must be non-negative");
    if (eval_interval < 0 || eval_episodes < 0) fail("evaluation settings must be non-negative");
  }
};

}  // namespace lego::marl
