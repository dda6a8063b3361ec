#pragma once

#include <span>

#include "lego/core/random.hpp"
#include "lego/sim/physics.hpp"
#include "lego/sim/rewards.hpp"
#include "lego/sim/types.hpp"
#include "lego/sim/visibility.hpp"

namespace lego::sim {

struct EntitySizes {
  static constexpr double kSpreadAgent = 0.15;
  static constexpr double kLandmark = 0.05;
  static constexpr double kPursuer = 0.075;
  static constexpr double kEvader = 0.05;
  static constexpr double kObstacle = 0.2;
};

namespace detail {

inline Vec2 sample_agent_position(Rng& rng, InitDistribution init, double bounds) {
  double lo = -bounds, hi = bounds;
  if (init == InitDistribution::LeftSide) hi = 0.0;
  if (init == InitDistribution::RightSide) lo = 0.0;
  const double x = uniform(rng, lo, hi);
  const double y = uniform(rng, -bounds, bounds);
  return {x, y};
}

inline EntityState make_agent(Role role) {
  EntityState e;
  e.role = role;
  switch (role) {
    case Role::Agent:
      e.radius = EntitySizes::kSpreadAgent;
      e.accel = 5.0;
      break;
    case Role::Pursuer:
      e.radius = EntitySizes::kPursuer;
      e.accel = 3.0;
      e.max_speed = 1.0;
      break;
    case Role::Evader:
      e.radius = EntitySizes::kEvader;
      e.accel = 4.0;
      e.max_speed = 1.3;
      break;
    default:
      throw ContractError("not an agent role");
  }
  return e;
}

inline EntityState make_static(Role role) {
  EntityState e;
  e.role = role;
  e.movable = false;
  e.accel = 0.0;
  if (role == Role::Landmark) {
    e.radius = EntitySizes::kLandmark;
    e.collidable = false;
  } else {
    e.radius = EntitySizes::kObstacle;
  }
  return e;
}

}  // namespace detail

/// Initial world for an episode. Agents follow the configured init
/// distribution; landmarks are uniform over the arena and obstacles uniform
/// over its inner 90%.
inline WorldState reset(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed);
  WorldState w;
  w.scenario = config.scenario;
  w.physics = config.physics;
  w.horizon = config.horizon;
  w.bounds = config.bounds;
  w.time_step = 0;

  auto add_agents = [&](Role role, int count) {
    for (int i = 0; i < count; ++i) {
      auto e = detail::make_agent(role);
      e.mass = config.physics.mass;
      e.position = detail::sample_agent_position(rng, config.init, config.bounds);
      w.entities.push_back(e);
    }
  };
  auto add_static = [&](Role role, int count, double extent) {
    for (int i = 0; i < count; ++i) {
      auto e = detail::make_static(role);
      e.position = Vec2(uniform(rng, -extent, extent), uniform(rng, -extent, extent));
      w.entities.push_back(e);
    }
  };

  if (config.scenario == Scenario::Spread) {
    add_agents(Role::Agent, config.agents);
    add_static(Role::Landmark, config.landmarks, config.bounds);
  } else {
    add_agents(Role::Pursuer, config.pursuers);
    add_agents(Role::Evader, config.evaders);
    add_static(Role::Obstacle, config.obstacles, 0.9 * config.bounds);
  }
  return w;
}

struct StepResult {
  WorldState state;
  std::vector<double> rewards;
  bool done = false;
};

/// Advances the world one step and scores the successor state.
inline StepResult step(const WorldState& state, std::span<const Vec2> actions, double action_cap = 1.0) {
  require(state.time_step < state.horizon, "episode already finished");
  for (const auto& a : actions)
    require(!(a.norm() > action_cap * (1.0 + 1e-9)), "action exceeds the norm cap");
  StepResult r;
  r.state = integrate(state, actions);
  r.rewards = rewards(r.state);
  r.done = r.state.time_step == state.horizon;
  return r;
}

}  // namespace lego::sim
