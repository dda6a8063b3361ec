#pragma once

#include <string>
#include <string_view>

#include "lego/canonical/frame.hpp"
#include "lego/graph/role_graphs.hpp"
#include "lego/sim/world.hpp"

namespace lego::policy {

/// Observation pipelines.
///   Lego     canonicalize -> role graphs -> per-role attention encoders
///   Mlp      raw world-frame vector of fixed width
///   MlpLocal the same vector expressed in the agent-centric frame
///   Gcn      raw world-frame node features on one homogeneous graph
enum class Arch : std::uint8_t { Lego, Mlp, MlpLocal, Gcn };

inline std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::Lego: return "lego";
    case Arch::Mlp: return "mlp";
    case Arch::MlpLocal: return "mlp-local";
    case Arch::Gcn: return "gcn";
  }
  return "lego";
}

inline Arch arch_from_name(std::string_view name) {
  for (Arch a : {Arch::Lego, Arch::Mlp, Arch::MlpLocal, Arch::Gcn})
    if (arch_name(a) == name) return a;
  throw ConfigError("unknown arch '" + std::string(name) + "'");
}

/// True when the architecture can consume any team size without reshaping.
inline constexpr bool size_agnostic(Arch a) { return a == Arch::Lego || a == Arch::Gcn; }

/// Input of one actor or critic evaluation. Only the member matching the
/// architecture is populated.
struct Observation {
  graph::RoleGraphs graphs;       // Lego
  std::vector<double> features;   // Mlp/MlpLocal: flat vector; Gcn: row-major node matrix
  std::size_t node_count = 0;     // Gcn
};

struct AgentView {
  std::size_t entity = 0;
  Role role = Role::Agent;
  canonical::CanonicalFrame frame;
  Observation actor;
  Observation critic;
  bool critic_is_actor = true;  // critic input identical to actor input
};

/// Width of the flat observation used by the MLP baselines:
/// own (v, p), (p, v) of every other agent, p of every static entity.
inline std::size_t flat_width(const sim::WorldState& state) {
  std::size_t agents = 0, statics = 0;
  for (const auto& e : state.entities) (is_controllable(e.role) ? agents : statics)++;
  return 4 + 4 * (agents - 1) + 2 * statics;
}

inline std::size_t flat_width(const sim::ScenarioConfig& c) {
  if (c.scenario == sim::Scenario::Spread) return 4 + 4 * (c.agents - 1) + 2 * c.landmarks;
  return 4 + 4 * (c.pursuers + c.evaders - 1) + 2 * c.obstacles;
}

inline std::size_t gcn_node_width(std::span<const Role> schema) { return 4 + schema.size(); }

namespace detail {

inline bool contains(std::span<const std::size_t> sorted, std::size_t j) {
  return std::binary_search(sorted.begin(), sorted.end(), j);
}

/// Hidden entities contribute zeros so the width stays fixed.
inline std::vector<double> flat_features(const sim::WorldState& state, std::size_t observer,
                                         std::span<const std::size_t> visible,
                                         const canonical::CanonicalFrame* frame) {
  std::vector<double> f;
  f.reserve(flat_width(state));
  const auto& self = state.entities[observer];
  const Mat2 to_local = frame ? Mat2(frame->rotation.transpose()) : Mat2::Identity();
  if (frame) {
    f.insert(f.end(), {self.velocity.norm(), 0.0, 0.0, 0.0});
  } else {
    f.insert(f.end(), {self.velocity.x(), self.velocity.y(), self.position.x(), self.position.y()});
  }
  auto place = [&](const Vec2& p) { return frame ? Vec2(to_local * (p - frame->origin)) : p; };
  auto turn = [&](const Vec2& v) { return frame ? Vec2(to_local * v) : v; };
  for (std::size_t j = 0; j < state.entities.size(); ++j) {
    const auto& e = state.entities[j];
    if (j == observer || !is_controllable(e.role)) continue;
    if (contains(visible, j)) {
      const Vec2 p = place(e.position), v = turn(e.velocity);
      f.insert(f.end(), {p.x(), p.y(), v.x(), v.y()});
    } else {
      f.insert(f.end(), {0.0, 0.0, 0.0, 0.0});
    }
  }
  for (std::size_t j = 0; j < state.entities.size(); ++j) {
    const auto& e = state.entities[j];
    if (is_controllable(e.role)) continue;
    const Vec2 p = contains(visible, j) ? place(e.position) : Vec2::Zero();
    f.insert(f.end(), {p.x(), p.y()});
  }
  return f;
}

inline Observation gcn_features(const sim::WorldState& state, std::size_t observer, std::span<const std::size_t> visible,
                                std::span<const Role> schema) {
  Observation o;
  const auto width = gcn_node_width(schema);
  auto push_node = [&](const sim::EntityState& e, Role bucket) {
    const auto at = o.features.size();
    o.features.resize(at + width, 0.0);
    o.features[at + 0] = e.position.x();
    o.features[at + 1] = e.position.y();
    o.features[at + 2] = e.velocity.x();
    o.features[at + 3] = e.velocity.y();
    const auto it = std::find(schema.begin(), schema.end(), bucket);
    require(it != schema.end(), "role missing from schema");
    o.features[at + 4 + static_cast<std::size_t>(it - schema.begin())] = 1.0;
    ++o.node_count;
  };
  push_node(state.entities[observer], Role::SelfAgent);
  for (auto j : visible)
    if (j != observer) push_node(state.entities[j], state.entities[j].role);
  return o;
}

inline Observation make_observation(policy::Arch arch, const sim::WorldState& state, std::size_t observer,
                                    std::span<const std::size_t> visible, const canonical::CanonicalFrame& frame,
                                    std::span<const Role> schema) {
  Observation o;
  switch (arch) {
    case Arch::Lego:
      o.graphs = graph::build_role_graphs(canonical::canonicalize(state, observer, visible, frame), schema);
      break;
    case Arch::Mlp:
      o.features = flat_features(state, observer, visible, nullptr);
      break;
    case Arch::MlpLocal:
      o.features = flat_features(state, observer, visible, &frame);
      break;
    case Arch::Gcn:
      o = gcn_features(state, observer, visible, schema);
      break;
  }
  return o;
}

}  // namespace detail

/// Builds the actor view (occlusion applied) and the critic view (full
/// visibility) of one agent. Architectures without canonicalization act in
/// the world frame, which is expressed as an identity frame.
inline AgentView observe(Arch arch, const sim::WorldState& state, std::size_t agent, std::span<const Role> schema) {
  AgentView view;
  view.entity = agent;
  view.role = state.entities[agent].role;
  const bool canonical_arch = arch == Arch::Lego || arch == Arch::MlpLocal;
  view.frame = canonical_arch ? canonical::build_frame(state.entities[agent], canonical::center_of_mass(state))
                              : canonical::CanonicalFrame::identity(state.entities[agent].position);
  const auto visible = sim::visible_entities(state, agent);
  view.actor = detail::make_observation(arch, state, agent, visible, view.frame, schema);
  view.critic_is_actor = visible.size() == state.entities.size();
  if (!view.critic_is_actor) {
    const auto everyone = sim::all_entities(state);
    view.critic = detail::make_observation(arch, state, agent, everyone, view.frame, schema);
  }
  return view;
}

inline const Observation& critic_input(const AgentView& v) { return v.critic_is_actor ? v.actor : v.critic; }

}  // namespace lego::policy
