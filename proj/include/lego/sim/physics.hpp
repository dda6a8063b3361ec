#pragma once

#include <cmath>
#include <span>

#include "lego/sim/types.hpp"

namespace lego::sim {

/// Numerically stable log(1 + exp(x)).
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Soft contact force acting on `a` due to `b`.
///
/// Magnitude k * margin * log(1 + exp((r_a + r_b - d) / margin)) along the
/// center line, cut to zero once the gap exceeds the activation band. Coincident
/// centers push `a` along +x (and `b` along -x) with the magnitude at d = 0.
inline Vec2 contact_force(const EntityState& a, const EntityState& b, const Physics& physics) {
  if (!a.collidable || !b.collidable) return Vec2::Zero();
  const Vec2 delta = a.position - b.position;
  const double dist = delta.norm();
  const double contact = a.radius + b.radius;
  if (dist >= contact + physics.activation_margins * physics.contact_margin) return Vec2::Zero();
  const double k = physics.contact_margin;
  const double magnitude = physics.contact_stiffness * k * softplus((contact - dist) / k);
  if (dist == 0.0) return Vec2(magnitude, 0.0);
  return delta / dist * magnitude;
}

/// Net contact force on every entity; pair forces are applied antisymmetrically.
inline std::vector<Vec2> contact_forces(const WorldState& state) {
  const auto n = state.entities.size();
  std::vector<Vec2> forces(n, Vec2::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = state.entities[i];
      const auto& b = state.entities[j];
      if (!a.movable && !b.movable) continue;
      const Vec2 f = contact_force(a, b, state.physics);
      forces[i] += f;
      forces[j] -= f;
    }
  }
  return forces;
}

/// One semi-implicit Euler step of the particle dynamics. `actions` holds one
/// force direction per controllable agent in entity order; it is scaled by the
/// agent's acceleration gain.
inline WorldState integrate(const WorldState& state, std::span<const Vec2> actions) {
  const auto agents = controllable_indices(state);
  if (actions.size() != agents.size())
    throw ContractError("expected " + std::to_string(agents.size()) + " actions, got " +
                        std::to_string(actions.size()));
  for (const auto& a : actions)
    if (!std::isfinite(a.x()) || !std::isfinite(a.y())) throw ContractError("non-finite action");

  WorldState next = state;
  auto forces = contact_forces(state);
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const auto& e = state.entities[agents[k]];
    forces[agents[k]] += e.accel * actions[k];
  }

  const double dt = state.physics.dt;
  for (std::size_t i = 0; i < next.entities.size(); ++i) {
    auto& e = next.entities[i];
    if (!e.movable) {
      e.velocity.setZero();
      continue;
    }
    e.velocity = e.velocity * (1.0 - state.physics.damping) + forces[i] / e.mass * dt;
    if (std::isfinite(e.max_speed)) {
      const double speed = e.velocity.norm();
      if (speed > e.max_speed) e.velocity *= e.max_speed / speed;
    }
    e.position += e.velocity * dt;
  }
  next.time_step = state.time_step + 1;
  return next;
}

}  // namespace lego::sim
