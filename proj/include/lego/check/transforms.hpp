#pragma once

#include <cmath>
#include <numbers>

#include "lego/core/random.hpp"
#include "lego/sim/types.hpp"

namespace lego::check {

/// Element of E(2): x -> linear * x + translation, with `linear` orthogonal.
struct Isometry {
  Mat2 linear = Mat2::Identity();
  Vec2 translation = Vec2::Zero();

  static Isometry rotation(double theta, Vec2 t = Vec2::Zero()) {
    Isometry g;
    g.linear << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    g.translation = t;
    return g;
  }
  /// Reflection across the line through the origin at angle `theta`.
  static Isometry reflection(double theta, Vec2 t = Vec2::Zero()) {
    Isometry g;
    g.linear << std::cos(2 * theta), std::sin(2 * theta), std::sin(2 * theta), -std::cos(2 * theta);
    g.translation = t;
    return g;
  }
  Isometry then(const Isometry& next) const { return {next.linear * linear, next.linear * translation + next.translation}; }
};

/// Positions transform affinely, velocities linearly.
inline sim::WorldState transform(const sim::WorldState& w, const Isometry& g) {
  auto out = w;
  for (auto& e : out.entities) {
    e.position = g.linear * e.position + g.translation;
    e.velocity = g.linear * e.velocity;
  }
  return out;
}

/// Draws rotations, reflections, translations and their compositions.
inline Isometry random_isometry(Rng& rng, int kind) {
  const double theta = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const Vec2 t(uniform(rng, -5.0, 5.0), uniform(rng, -5.0, 5.0));
  switch (kind % 4) {
    case 0: return Isometry::rotation(theta);
    case 1: return Isometry::rotation(0.0, t);
    case 2: return Isometry::reflection(theta);
    default:
      return Isometry::reflection(theta, t).then(Isometry::rotation(uniform(rng, -3.0, 3.0), Vec2(1.0, -2.0)));
  }
}

/// Random mid-episode world: positions in the arena, non-zero velocities.
inline sim::WorldState random_world(const sim::ScenarioConfig& config, Rng& rng) {
  sim::WorldState w;
  w.scenario = config.scenario;
  w.physics = config.physics;
  w.horizon = config.horizon;
  w.bounds = config.bounds;
  w.time_step = 0;
  auto add = [&](Role role, int n, double radius, bool movable, double max_speed, double accel) {
    for (int i = 0; i < n; ++i) {
      sim::EntityState e;
      e.role = role;
      e.radius = radius;
      e.movable = movable;
      e.collidable = role != Role::Landmark;
      e.max_speed = max_speed;
      e.accel = accel;
      e.position = Vec2(uniform(rng, -config.bounds, config.bounds), uniform(rng, -config.bounds, config.bounds));
      if (movable) {
        const double speed = uniform(rng, 0.05, std::isfinite(max_speed) ? max_speed : 1.5);
        const double heading = uniform(rng, -std::numbers::pi, std::numbers::pi);
        e.velocity = Vec2(std::cos(heading), std::sin(heading)) * speed;
      }
      w.entities.push_back(e);
    }
  };
  if (config.scenario == sim::Scenario::Spread) {
    add(Role::Agent, config.agents, 0.15, true, sim::kUnbounded, 5.0);
    add(Role::Landmark, config.landmarks, 0.05, false, sim::kUnbounded, 0.0);
  } else {
    add(Role::Pursuer, config.pursuers, 0.075, true, 1.0, 3.0);
    add(Role::Evader, config.evaders, 0.05, true, 1.3, 4.0);
    add(Role::Obstacle, config.obstacles, 0.2, false, sim::kUnbounded, 0.0);
  }
  return w;
}

}  // namespace lego::check
