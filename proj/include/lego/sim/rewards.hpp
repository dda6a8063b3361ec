#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "lego/sim/types.hpp"

namespace lego::sim {

inline bool overlapping(const EntityState& a, const EntityState& b) {
  return (a.position - b.position).norm() < a.radius + b.radius;
}

/// Shared coverage term plus a -1 penalty per overlapping teammate.
inline std::vector<double> spread_rewards(const WorldState& state) {
  require(state.scenario == Scenario::Spread, "spread_rewards called on a non-spread world");
  const auto agents = controllable_indices(state);
  double coverage = 0.0;
  for (const auto& landmark : state.entities) {
    if (landmark.role != Role::Landmark) continue;
    double best = std::numeric_limits<double>::infinity();
    for (auto i : agents) best = std::min(best, (state.entities[i].position - landmark.position).norm());
    coverage -= best;
  }
  std::vector<double> rewards(agents.size(), coverage);
  for (std::size_t a = 0; a < agents.size(); ++a)
    for (std::size_t b = 0; b < agents.size(); ++b)
      if (a != b && overlapping(state.entities[agents[a]], state.entities[agents[b]])) rewards[a] -= 1.0;
  return rewards;
}

/// Out-of-arena penalty for one coordinate, expressed as a fraction of the half-width.
inline double boundary_penalty(double fraction) {
  const double x = std::abs(fraction);
  if (x < 0.9) return 0.0;
  if (x < 1.0) return (x - 0.9) * 10.0;
  return std::min(std::exp(2.0 * x - 2.0), 10.0);
}

inline constexpr double kCaptureReward = 10.0;

/// Pursuers share +10 per pursuer/evader contact; the touched evader takes -10.
/// Every agent pays the boundary penalty on both coordinates.
inline std::vector<double> tag_rewards(const WorldState& state) {
  require(state.scenario == Scenario::TagOcclusion, "tag_rewards called on a non-tag world");
  const auto agents = controllable_indices(state);
  std::vector<double> rewards(agents.size(), 0.0);
  double team_capture = 0.0;
  for (std::size_t e = 0; e < agents.size(); ++e) {
    const auto& evader = state.entities[agents[e]];
    if (evader.role != Role::Evader) continue;
    for (auto p : agents) {
      const auto& pursuer = state.entities[p];
      if (pursuer.role != Role::Pursuer || !overlapping(pursuer, evader)) continue;
      team_capture += kCaptureReward;
      rewards[e] -= kCaptureReward;
    }
  }
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const auto& a = state.entities[agents[k]];
    if (a.role == Role::Pursuer) rewards[k] += team_capture;
    rewards[k] -= boundary_penalty(a.position.x() / state.bounds) + boundary_penalty(a.position.y() / state.bounds);
  }
  return rewards;
}

inline std::vector<double> rewards(const WorldState& state) {
  return state.scenario == Scenario::Spread ? spread_rewards(state) : tag_rewards(state);
}

}  // namespace lego::sim
