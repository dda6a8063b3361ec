#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "lego/marl/scripted.hpp"
#include "lego/policy/role_policy.hpp"

namespace lego::marl {

using policy::Arch;

/// How a role picks actions during a rollout.
enum class Control {
  Learn,    // stochastic policy, updated by PPO
  Frozen,   // policy mean, never updated
  Random,   // random_action
  Pursue,   // pursue_action
  Flee,     // flee_action
};

inline std::string_view control_name(Control c) {
  switch (c) {
    case Control::Learn: return "learn";
    case Control::Frozen: return "frozen";
    case Control::Random: return "random";
    case Control::Pursue: return "pursue";
    case Control::Flee: return "flee";
  }
  return "?";
}

inline bool uses_policy(Control c) { return c == Control::Learn || c == Control::Frozen; }

template <class S>
struct RoleSlot {
  Role role = Role::Agent;
  Control control = Control::Learn;
  std::shared_ptr<policy::RolePolicy<S>> policy;  // null for random/scripted roles
};

/// One slot per controllable role of a scenario, in controllable_roles order.
template <class S>
struct Team {
  std::vector<RoleSlot<S>> slots;

  RoleSlot<S>& slot(Role r) {
    for (auto& s : slots)
      if (s.role == r) return s;
    throw ContractError("team has no slot for role " + std::string(role_name(r)));
  }
  const RoleSlot<S>& slot(Role r) const { return const_cast<Team&>(*this).slot(r); }
};

/// Per-role architecture and control; the policy is built fresh when needed.
struct RoleSpec {
  Role role = Role::Agent;
  Arch arch = Arch::Lego;
  Control control = Control::Learn;
};

/// Same architecture, learning, for every controllable role.
inline std::vector<RoleSpec> uniform_specs(sim::Scenario s, Arch arch) {
  std::vector<RoleSpec> out;
  for (Role r : sim::controllable_roles(s)) out.push_back({r, arch, Control::Learn});
  return out;
}

template <class S>
Team<S> make_team(const sim::ScenarioConfig& scenario, std::span<const RoleSpec> specs, std::uint64_t seed) {
  Team<S> team;
  for (Role r : sim::controllable_roles(scenario.scenario)) {
    const RoleSpec* spec = nullptr;
    for (const auto& s : specs)
      if (s.role == r) spec = &s;
    if (spec == nullptr) throw ConfigError("no specification for role " + std::string(role_name(r)));
    RoleSlot<S> slot{r, spec->control, nullptr};
    if (uses_policy(spec->control))
      slot.policy = std::make_shared<policy::RolePolicy<S>>(
          policy::default_policy_config(spec->arch, r, scenario, derive_seed(seed, static_cast<std::uint64_t>(r))));
    team.slots.push_back(std::move(slot));
  }
  const auto roles = sim::controllable_roles(scenario.scenario);
  for (const auto& s : specs)
    if (std::find(roles.begin(), roles.end(), s.role) == roles.end())
      throw ConfigError("role " + std::string(role_name(s.role)) + " is not controllable in " +
                        std::string(sim::scenario_name(scenario.scenario)));
  return team;
}

/// Throws ConfigError when a fixed-width policy cannot read the scenario's observations.
template <class S>
void check_compatible(const Team<S>& team, const sim::ScenarioConfig& scenario) {
  for (const auto& s : team.slots) {
    if (!s.policy) continue;
    const auto& c = s.policy->config();
    if (c.schema != sim::role_schema(scenario.scenario))
      throw ConfigError("policy for " + std::string(role_name(s.role)) + " was built for another scenario");
    if (!policy::size_agnostic(c.arch) && c.flat_width != policy::flat_width(scenario))
      throw ConfigError(std::string(policy::arch_name(c.arch)) + " policy expects observation width " +
                        std::to_string(c.flat_width) + " but " + scenario.describe() + " produces " +
                        std::to_string(policy::flat_width(scenario)));
  }
}

}  // namespace lego::marl
