#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "lego/core/errors.hpp"

namespace lego {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

enum class Role : std::uint8_t { SelfAgent, Agent, Pursuer, Evader, Obstacle, Landmark };

inline constexpr bool is_controllable(Role role) {
  return role == Role::Agent || role == Role::Pursuer || role == Role::Evader;
}

inline std::string_view role_name(Role role) {
  switch (role) {
    case Role::SelfAgent: return "self";
    case Role::Agent: return "agent";
    case Role::Pursuer: return "pursuer";
    case Role::Evader: return "evader";
    case Role::Obstacle: return "obstacle";
    case Role::Landmark: return "landmark";
  }
  return "unknown";
}

inline Role role_from_name(std::string_view name) {
  for (Role r : {Role::SelfAgent, Role::Agent, Role::Pursuer, Role::Evader, Role::Obstacle, Role::Landmark})
    if (role_name(r) == name) return r;
  throw ConfigError("unknown role '" + std::string(name) + "'");
}

}  // namespace lego

namespace lego::sim {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

struct EntityState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double radius = 0.0;
  Role role = Role::Agent;
  bool movable = true;
  bool collidable = true;
  double max_speed = kUnbounded;
  double accel = 1.0;
  double mass = 1.0;
};

enum class Scenario : std::uint8_t { Spread, TagOcclusion };
enum class InitDistribution : std::uint8_t { Uniform, LeftSide, RightSide };

inline std::string_view scenario_name(Scenario s) { return s == Scenario::Spread ? "spread" : "tag"; }

inline Scenario scenario_from_name(std::string_view name) {
  if (name == "spread") return Scenario::Spread;
  if (name == "tag" || name == "tag-occlusion") return Scenario::TagOcclusion;
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

inline std::string_view init_name(InitDistribution d) {
  switch (d) {
    case InitDistribution::Uniform: return "uniform";
    case InitDistribution::LeftSide: return "left";
    case InitDistribution::RightSide: return "right";
  }
  return "uniform";
}

inline InitDistribution init_from_name(std::string_view name) {
  if (name == "uniform") return InitDistribution::Uniform;
  if (name == "left" || name == "left-side") return InitDistribution::LeftSide;
  if (name == "right" || name == "right-side") return InitDistribution::RightSide;
  throw ConfigError("unknown init distribution '" + std::string(name) + "'");
}

struct Physics {
  double dt = 0.1;
  double damping = 0.25;
  double mass = 1.0;
  double contact_stiffness = 100.0;
  double contact_margin = 0.001;
  // Contacts switch off once the gap exceeds this many margins; the soft
  // penetration term is below 1e-10 there.
  double activation_margins = 20.0;
};

struct ScenarioConfig {
  Scenario scenario = Scenario::Spread;
  int agents = 3;
  int landmarks = 3;
  int pursuers = 3;
  int evaders = 2;
  int obstacles = 2;
  int horizon = 25;
  double bounds = 1.0;
  Physics physics{};
  InitDistribution init = InitDistribution::Uniform;
  std::uint64_t seed = 0;

  static ScenarioConfig spread(int n) {
    ScenarioConfig c;
    c.scenario = Scenario::Spread;
    c.agents = n;
    c.landmarks = n;
    c.horizon = 25;
    return c;
  }

  static ScenarioConfig tag() {
    ScenarioConfig c;
    c.scenario = Scenario::TagOcclusion;
    c.horizon = 100;
    return c;
  }

  void validate() const {
    if (horizon <= 0) throw ConfigError("horizon must be positive");
    if (!(bounds > 0.0)) throw ConfigError("bounds must be positive");
    if (!(physics.dt > 0.0) || physics.damping < 0.0 || physics.damping >= 1.0 || !(physics.mass > 0.0))
      throw ConfigError("invalid physics constants");
    if (scenario == Scenario::Spread) {
      if (agents < 1) throw ConfigError("spread needs at least one agent");
      if (agents != landmarks) throw ConfigError("spread requires as many landmarks as agents");
    } else {
      if (pursuers < 1 || evaders < 1) throw ConfigError("tag requires at least one pursuer and one evader");
      if (obstacles < 0) throw ConfigError("obstacle count must be non-negative");
    }
  }

  int controllable_count() const { return scenario == Scenario::Spread ? agents : pursuers + evaders; }

  std::string describe() const {
    if (scenario == Scenario::Spread)
      return "spread-" + std::to_string(agents) + "-" + std::string(init_name(init));
    return "tag-" + std::to_string(pursuers) + "p" + std::to_string(evaders) + "e" + std::to_string(obstacles) +
           "o-" + std::string(init_name(init));
  }
};

struct WorldState {
  Scenario scenario = Scenario::Spread;
  Physics physics{};
  int horizon = 25;
  double bounds = 1.0;
  int time_step = 0;
  std::vector<EntityState> entities;

  std::size_t size() const { return entities.size(); }
};

/// Entity indices of the decision-making agents, in entity order.
inline std::vector<std::size_t> controllable_indices(const WorldState& state) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < state.entities.size(); ++i)
    if (is_controllable(state.entities[i].role)) out.push_back(i);
  return out;
}

/// Roles that own a policy in the scenario, in a fixed order.
inline std::vector<Role> controllable_roles(Scenario s) {
  if (s == Scenario::Spread) return {Role::Agent};
  return {Role::Pursuer, Role::Evader};
}

/// Role buckets of the graph encoder; the observer always occupies SelfAgent.
inline std::vector<Role> role_schema(Scenario s) {
  if (s == Scenario::Spread) return {Role::SelfAgent, Role::Agent, Role::Landmark};
  return {Role::SelfAgent, Role::Pursuer, Role::Evader, Role::Obstacle};
}

}  // namespace lego::sim
