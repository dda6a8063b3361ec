#pragma once

#include <span>

#include "lego/sim/types.hpp"

namespace lego::canonical {

inline constexpr double kZeroSpeed = 1e-8;

/// +90 degree rotation.
inline Mat2 quarter_turn() {
  Mat2 j;
  j << 0.0, -1.0, 1.0, 0.0;
  return j;
}

/// Agent-centric frame: columns of `rotation` are the local x and y axes in
/// world coordinates. The rotation may be improper (handedness -1) because the
/// y axis is chosen to point towards the agents' center of mass.
struct CanonicalFrame {
  Mat2 rotation = Mat2::Identity();
  Vec2 origin = Vec2::Zero();
  int handedness = 1;

  static CanonicalFrame identity(const Vec2& origin = Vec2::Zero()) { return {Mat2::Identity(), origin, 1}; }
};

inline CanonicalFrame build_frame(const sim::EntityState& agent, const Vec2& center_of_mass,
                                  const Vec2& global_x = Vec2::UnitX()) {
  const double speed = agent.velocity.norm();
  const Vec2 x = speed > kZeroSpeed ? Vec2(agent.velocity / speed) : global_x;
  const Vec2 d = center_of_mass - agent.position;
  const Vec2 jx = quarter_turn() * x;
  // y makes an acute angle with d; sgn(0) resolves to +1.
  const double side = jx.dot(d);
  const Vec2 y = side >= 0.0 ? jx : Vec2(-jx);
  CanonicalFrame f;
  f.rotation.col(0) = x;
  f.rotation.col(1) = y;
  f.origin = agent.position;
  f.handedness = side >= 0.0 ? 1 : -1;
  return f;
}

/// Mean position of the controllable agents; obstacles and landmarks are excluded.
inline Vec2 center_of_mass(const sim::WorldState& state) {
  Vec2 sum = Vec2::Zero();
  int count = 0;
  for (const auto& e : state.entities) {
    if (!is_controllable(e.role)) continue;
    sum += e.position;
    ++count;
  }
  require(count > 0, "center_of_mass needs at least one controllable agent");
  return sum / count;
}

struct Neighbor {
  std::size_t index = 0;
  Role role = Role::Agent;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
};

struct CanonicalObservation {
  Vec2 self_speed = Vec2::Zero();  // (|v_i|, 0)
  std::vector<Neighbor> neighbors;
};

/// Expresses every visible entity other than the observer in the observer's frame.
inline CanonicalObservation canonicalize(const sim::WorldState& state, std::size_t observer,
                                         std::span<const std::size_t> visible, const CanonicalFrame& frame) {
  require(observer < state.entities.size(), "observer out of range");
  CanonicalObservation obs;
  obs.self_speed = Vec2(state.entities[observer].velocity.norm(), 0.0);
  const Mat2 to_local = frame.rotation.transpose();
  obs.neighbors.reserve(visible.size());
  for (auto j : visible) {
    if (j == observer) continue;
    require(j < state.entities.size(), "visible index out of range");
    const auto& e = state.entities[j];
    obs.neighbors.push_back({j, e.role, to_local * (e.position - frame.origin), to_local * e.velocity});
  }
  return obs;
}

inline Vec2 decanonicalize_action(const CanonicalFrame& frame, const Vec2& local_action) {
  return frame.rotation * local_action;
}

}  // namespace lego::canonical
