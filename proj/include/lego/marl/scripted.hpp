#pragma once

#include <limits>

#include "lego/core/random.hpp"
#include "lego/policy/role_policy.hpp"
#include "lego/sim/types.hpp"

namespace lego::marl {

/// Zero-mean Gaussian action with the initial policy spread, norm-capped.
inline Vec2 random_action(Rng& rng, double sigma = std::exp(-0.5), double cap = 1.0) {
  const Vec2 a(sigma * standard_normal(rng), sigma * standard_normal(rng));
  return policy::cap_norm(a, cap);
}

/// Full-throttle heading toward the nearest evader.
inline Vec2 pursue_action(const sim::WorldState& w, std::size_t agent) {
  const Vec2 p = w.entities[agent].position;
  double best = std::numeric_limits<double>::infinity();
  Vec2 dir = Vec2::Zero();
  for (const auto& e : w.entities) {
    if (e.role != Role::Evader) continue;
    const Vec2 d = e.position - p;
    if (d.norm() < best) {
      best = d.norm();
      dir = d;
    }
  }
  return dir.norm() > 1e-12 ? Vec2(dir / dir.norm()) : Vec2::Zero();
}

/// Inverse-square repulsion from pursuers plus a pull back from the arena edge.
inline Vec2 flee_action(const sim::WorldState& w, std::size_t agent) {
  const Vec2 p = w.entities[agent].position;
  Vec2 dir = Vec2::Zero();
  for (const auto& e : w.entities) {
    if (e.role != Role::Pursuer) continue;
    const Vec2 d = p - e.position;
    dir += d / std::max(d.squaredNorm(), 1e-4);
  }
  const double edge = 0.8 * w.bounds;
  const double push = std::max(dir.norm(), 1.0);
  for (int c = 0; c < 2; ++c)
    if (std::abs(p[c]) > edge) dir[c] -= push * (p[c] - std::copysign(edge, p[c])) / (0.2 * w.bounds);
  return dir.norm() > 1e-12 ? Vec2(dir / dir.norm()) : Vec2::Zero();
}

}  // namespace lego::marl
