#pragma once

#include <functional>

#include "lego/marl/gae.hpp"
#include "lego/marl/team.hpp"
#include "lego/sim/world.hpp"

namespace lego::marl {

/// Transitions of one learning role. Transition index = step * tracks + track,
/// where a track is one (env, agent-of-role) pair.
template <class S>
struct RoleBatch {
  Role role = Role::Agent;
  std::size_t tracks = 0;
  std::size_t steps = 0;
  std::vector<policy::AgentView> views;
  std::vector<Vec2> raw_actions;
  std::vector<Vec2> local_actions;
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> bootstrap;  // per track, V after the final step
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return views.size(); }
};

template <class S>
struct RolloutBatch {
  std::vector<RoleBatch<S>> roles;  // learning roles only
  std::vector<Role> stat_roles;     // every controllable role
  std::vector<std::vector<double>> episode_rewards;  // per stat role: completed-episode team means
  std::size_t steps = 0;

  RoleBatch<S>& role(Role r) {
    for (auto& b : roles)
      if (b.role == r) return b;
    throw ContractError("rollout holds no batch for role " + std::string(role_name(r)));
  }
  /// Mean completed-episode reward for a role, NaN if no episode finished.
  double mean_episode_reward(Role r) const {
    for (std::size_t k = 0; k < stat_roles.size(); ++k) {
      if (stat_roles[k] != r) continue;
      const auto& e = episode_rewards[k];
      if (e.empty()) return std::numeric_limits<double>::quiet_NaN();
      double s = 0.0;
      for (double x : e) s += x;
      return s / static_cast<double>(e.size());
    }
    throw ContractError("no statistics for role " + std::string(role_name(r)));
  }
};

/// Parallel instances of one scenario stepped in lockstep. Each reset draws
/// the next seed from a counter, so the episode sequence depends only on `seed`.
class VecEnv {
 public:
  VecEnv(sim::ScenarioConfig config, int count, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    require(count > 0, "VecEnv needs at least one instance");
    states_.resize(static_cast<std::size_t>(count));
    episode_seeds_.resize(states_.size());
    returns_.resize(states_.size());
    for (std::size_t e = 0; e < states_.size(); ++e) reset(e);
    agents_ = sim::controllable_indices(states_.front());
  }

  const sim::ScenarioConfig& config() const { return config_; }
  std::size_t size() const { return states_.size(); }
  const sim::WorldState& state(std::size_t e) const { return states_[e]; }
  std::uint64_t episode_seed(std::size_t e) const { return episode_seeds_[e]; }
  const std::vector<std::size_t>& agents() const { return agents_; }
  std::vector<double>& running_returns(std::size_t e) { return returns_[e]; }
  void set_state(std::size_t e, sim::WorldState s) { states_[e] = std::move(s); }

  void reset(std::size_t e) {
    episode_seeds_[e] = derive_seed(seed_, next_episode_++);
    states_[e] = sim::reset(config_, episode_seeds_[e]);
    returns_[e].assign(sim::controllable_indices(states_[e]).size(), 0.0);
  }

 private:
  sim::ScenarioConfig config_;
  std::uint64_t seed_;
  std::uint64_t next_episode_ = 0;
  std::vector<sim::WorldState> states_;
  std::vector<std::uint64_t> episode_seeds_;
  std::vector<std::vector<double>> returns_;
  std::vector<std::size_t> agents_;
};

/// Called once per env step with the pre-step state, the applied global actions
/// (controllable order) and the step result.
using StepObserver = std::function<void(std::size_t env, std::uint64_t episode_seed, const sim::WorldState& before,
                                        std::span<const Vec2> actions, const sim::StepResult& result)>;

struct RolloutOptions {
  bool greedy = false;  // learning roles act with their mean
  bool store = true;    // keep transitions for learning roles
  StepObserver observer;
};

/// Runs every env `steps` times through observe -> act -> decanonicalize -> step.
/// Finished episodes are reset in place.
template <class S>
RolloutBatch<S> collect_rollouts(VecEnv& envs, Team<S>& team, int steps, Rng& rng, const RolloutOptions& opt = {}) {
  require(steps > 0, "collect_rollouts needs a positive step count");
  check_compatible(team, envs.config());
  const auto& agents = envs.agents();
  const auto& proto = envs.state(0);
  const auto schema = sim::role_schema(proto.scenario);
  const std::size_t E = envs.size();

  RolloutBatch<S> out;
  out.steps = static_cast<std::size_t>(steps);
  // members[s] = positions (within agents) of the slot's role
  std::vector<std::vector<std::size_t>> members(team.slots.size());
  std::vector<int> batch_of(team.slots.size(), -1);
  for (std::size_t s = 0; s < team.slots.size(); ++s) {
    const auto& slot = team.slots[s];
    for (std::size_t k = 0; k < agents.size(); ++k)
      if (proto.entities[agents[k]].role == slot.role) members[s].push_back(k);
    out.stat_roles.push_back(slot.role);
    out.episode_rewards.emplace_back();
    if (opt.store && slot.control == Control::Learn) {
      batch_of[s] = static_cast<int>(out.roles.size());
      RoleBatch<S> b;
      b.role = slot.role;
      b.tracks = E * members[s].size();
      b.steps = out.steps;
      const std::size_t n = b.tracks * b.steps;
      b.views.reserve(n);
      b.raw_actions.reserve(n);
      b.local_actions.reserve(n);
      b.log_probs.reserve(n);
      b.values.reserve(n);
      b.rewards.reserve(n);
      b.dones.reserve(n);
      out.roles.push_back(std::move(b));
    }
  }

  std::vector<std::vector<Vec2>> actions(E, std::vector<Vec2>(agents.size(), Vec2::Zero()));
  std::vector<policy::AgentView> views;
  std::vector<const policy::AgentView*> ptrs;
  for (int t = 0; t < steps; ++t) {
    for (std::size_t s = 0; s < team.slots.size(); ++s) {
      auto& slot = team.slots[s];
      if (uses_policy(slot.control)) {
        const auto arch = slot.policy->arch();
        views.clear();
        for (std::size_t e = 0; e < E; ++e)
          for (auto k : members[s]) views.push_back(policy::observe(arch, envs.state(e), agents[k], schema));
        ptrs.clear();
        for (const auto& v : views) ptrs.push_back(&v);
        const bool sample = slot.control == Control::Learn && !opt.greedy;
        auto samples = slot.policy->act(ptrs, sample ? &rng : nullptr, !sample);
        std::size_t b = 0;
        for (std::size_t e = 0; e < E; ++e)
          for (auto k : members[s]) actions[e][k] = samples[b++].global_action;
        if (batch_of[s] >= 0) {
          auto& rb = out.roles[static_cast<std::size_t>(batch_of[s])];
          for (std::size_t i = 0; i < samples.size(); ++i) {
            rb.views.push_back(std::move(views[i]));
            rb.raw_actions.push_back(samples[i].raw_action);
            rb.local_actions.push_back(samples[i].local_action);
            rb.log_probs.push_back(samples[i].log_prob);
            rb.values.push_back(samples[i].value);
          }
        }
      } else {
        for (std::size_t e = 0; e < E; ++e)
          for (auto k : members[s]) {
            const auto& w = envs.state(e);
            switch (slot.control) {
              case Control::Random: actions[e][k] = random_action(rng); break;
              case Control::Pursue: actions[e][k] = pursue_action(w, agents[k]); break;
              case Control::Flee: actions[e][k] = flee_action(w, agents[k]); break;
              default: throw ContractError("unhandled control mode");
            }
          }
      }
    }

    for (std::size_t e = 0; e < E; ++e) {
      auto result = sim::step(envs.state(e), actions[e]);
      if (opt.observer) opt.observer(e, envs.episode_seed(e), envs.state(e), actions[e], result);
      auto& running = envs.running_returns(e);
      for (std::size_t k = 0; k < agents.size(); ++k) running[k] += result.rewards[k];
      for (std::size_t s = 0; s < team.slots.size(); ++s) {
        if (batch_of[s] < 0) continue;
        auto& rb = out.roles[static_cast<std::size_t>(batch_of[s])];
        for (auto k : members[s]) {
          rb.rewards.push_back(result.rewards[k]);
          rb.dones.push_back(result.done ? 1 : 0);
        }
      }
      if (result.done) {
        for (std::size_t s = 0; s < team.slots.size(); ++s) {
          if (members[s].empty()) continue;
          double m = 0.0;
          for (auto k : members[s]) m += running[k];
          out.episode_rewards[s].push_back(m / static_cast<double>(members[s].size()));
        }
        envs.reset(e);
      } else {
        envs.set_state(e, std::move(result.state));
      }
    }
  }

  // Bootstrap values; only read for tracks whose last step was not terminal.
  for (std::size_t s = 0; s < team.slots.size(); ++s) {
    if (batch_of[s] < 0) continue;
    auto& rb = out.roles[static_cast<std::size_t>(batch_of[s])];
    const auto arch = team.slots[s].policy->arch();
    views.clear();
    for (std::size_t e = 0; e < E; ++e)
      for (auto k : members[s]) views.push_back(policy::observe(arch, envs.state(e), agents[k], schema));
    ptrs.clear();
    for (const auto& v : views) ptrs.push_back(&v);
    rb.bootstrap.clear();
    for (const auto& a : team.slots[s].policy->act(ptrs, nullptr, true)) rb.bootstrap.push_back(a.value);
  }
  return out;
}

/// Advantages and returns for every track of a role batch.
template <class S>
void compute_gae(RoleBatch<S>& b, double gamma, double lambda) {
  require(b.size() == b.tracks * b.steps && b.rewards.size() == b.size() && b.bootstrap.size() == b.tracks,
          "compute_gae: incomplete role batch");
  b.advantages.assign(b.size(), 0.0);
  b.returns.assign(b.size(), 0.0);
  std::vector<double> r(b.steps), v(b.steps);
  std::vector<std::uint8_t> d(b.steps);
  for (std::size_t k = 0; k < b.tracks; ++k) {
    for (std::size_t t = 0; t < b.steps; ++t) {
      const std::size_t i = t * b.tracks + k;
      r[t] = b.rewards[i];
      v[t] = b.values[i];
      d[t] = b.dones[i];
    }
    const auto g = compute_gae(r, v, d, b.bootstrap[k], gamma, lambda);
    for (std::size_t t = 0; t < b.steps; ++t) {
      b.advantages[t * b.tracks + k] = g.advantages[t];
      b.returns[t * b.tracks + k] = g.returns[t];
    }
  }
}

/// Mean per-episode team reward for each controllable role over `episodes`
/// greedy episodes run in parallel, one env per episode.
template <class S>
std::vector<std::vector<double>> greedy_episode_rewards(Team<S>& team, const sim::ScenarioConfig& scenario,
                                                        int episodes, std::uint64_t seed,
                                                        const StepObserver& observer = {}) {
  VecEnv envs(scenario, episodes, seed);
  Rng rng = make_rng(derive_seed(seed, 0x5eed));
  RolloutOptions opt;
  opt.greedy = true;
  opt.store = false;
  opt.observer = observer;
  return collect_rollouts(envs, team, scenario.horizon, rng, opt).episode_rewards;
}

}  // namespace lego::marl
