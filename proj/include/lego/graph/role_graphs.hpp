#pragma once

#include <algorithm>
#include <array>
#include <span>

#include "lego/canonical/frame.hpp"

namespace lego::graph {

inline constexpr std::size_t kNodeWidth = 4;
using NodeFeature = std::array<double, kNodeWidth>;

/// One dense subgraph per schema role. Edges are implicit: every bucket is a
/// complete graph with self-loops, so only node features are stored.
struct RoleGraphs {
  std::vector<Role> schema;
  std::vector<std::vector<NodeFeature>> buckets;

  std::size_t bucket_index(Role role) const {
    const auto it = std::find(schema.begin(), schema.end(), role);
    require(it != schema.end(), "role '" + std::string(role_name(role)) + "' is not in the schema");
    return static_cast<std::size_t>(it - schema.begin());
  }
  const std::vector<NodeFeature>& bucket(Role role) const { return buckets[bucket_index(role)]; }
  std::size_t node_count() const {
    std::size_t n = 0;
    for (const auto& b : buckets) n += b.size();
    return n;
  }
};

/// Routes the observer into the SelfAgent bucket as [|v_i|, 0, 0, 0] and every
/// visible neighbour into its role bucket as [p_{j|i}, v_{j|i}], keeping entity order.
inline RoleGraphs build_role_graphs(const canonical::CanonicalObservation& obs, std::span<const Role> schema) {
  RoleGraphs g;
  g.schema.assign(schema.begin(), schema.end());
  g.buckets.resize(schema.size());
  g.buckets[g.bucket_index(Role::SelfAgent)].push_back({obs.self_speed.x(), obs.self_speed.y(), 0.0, 0.0});

  std::vector<const canonical::Neighbor*> ordered;
  ordered.reserve(obs.neighbors.size());
  for (const auto& n : obs.neighbors) ordered.push_back(&n);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->index < b->index; });
  for (const auto* n : ordered) {
    require(n->role != Role::SelfAgent, "neighbours cannot carry the SelfAgent role");
    g.buckets[g.bucket_index(n->role)].push_back(
        {n->position.x(), n->position.y(), n->velocity.x(), n->velocity.y()});
  }
  return g;
}

}  // namespace lego::graph
