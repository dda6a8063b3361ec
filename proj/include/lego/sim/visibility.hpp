#pragma once

#include <algorithm>

#include "lego/sim/types.hpp"

namespace lego::sim {

/// Shortest distance from `c` to the segment [a, b].
inline double point_segment_distance(const Vec2& a, const Vec2& b, const Vec2& c) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (c - a).norm();
  const double t = std::clamp((c - a).dot(ab) / len2, 0.0, 1.0);
  return (a + t * ab - c).norm();
}

inline bool segment_blocked(const Vec2& from, const Vec2& to, const EntityState& obstacle) {
  if ((to - from).squaredNorm() == 0.0) return false;
  return point_segment_distance(from, to, obstacle.position) < obstacle.radius;
}

/// Indices of entities the observer can see, ascending. Obstacles, the observer
/// and unobstructed entities are visible; an entity is hidden when the line of
/// sight passes through any obstacle disk.
inline std::vector<std::size_t> visible_entities(const WorldState& state, std::size_t observer) {
  require(observer < state.entities.size() && is_controllable(state.entities[observer].role),
          "observer must be a controllable agent");
  const Vec2& eye = state.entities[observer].position;
  std::vector<std::size_t> visible;
  for (std::size_t j = 0; j < state.entities.size(); ++j) {
    const auto& target = state.entities[j];
    if (j == observer || target.role == Role::Obstacle) {
      visible.push_back(j);
      continue;
    }
    bool blocked = false;
    for (const auto& o : state.entities) {
      if (o.role == Role::Obstacle && segment_blocked(eye, target.position, o)) {
        blocked = true;
        break;
      }
    }
    if (!blocked) visible.push_back(j);
  }
  return visible;
}

inline std::vector<std::size_t> all_entities(const WorldState& state) {
  std::vector<std::size_t> out(state.entities.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace lego::sim
