#pragma once

#include <cstdio>
#include <optional>
#include <ostream>

#include "lego/marl/ppo.hpp"

namespace lego::marl {

/// One metrics-log line: a role's statistics after one PPO update.
struct MetricsRow {
  long step = 0;  // environment steps consumed so far
  int update = 0;
  Role role = Role::Agent;
  double mean_episode_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double learning_rate = 0.0;
  std::optional<double> eval_reward;  // greedy evaluation, every eval_interval updates
};

inline constexpr const char* kMetricsHeader =
    "step,update,role,mean_episode_reward,policy_loss,value_loss,entropy,approx_kl,clip_fraction,grad_norm,"
    "learning_rate,eval_reward";

inline std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

inline std::string to_csv(const MetricsRow& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.update) + "," + std::string(role_name(r.role));
  for (double x : {r.mean_episode_reward, r.policy_loss, r.value_loss, r.entropy, r.approx_kl, r.clip_fraction,
                   r.grad_norm, r.learning_rate})
    s += "," + format_number(x);
  s += ",";
  if (r.eval_reward) s += format_number(*r.eval_reward);
  return s;
}

inline void write_metrics(std::ostream& os, std::span<const MetricsRow> rows) {
  os << kMetricsHeader << '\n';
  for (const auto& r : rows) os << to_csv(r) << '\n';
}

/// Collect / GAE / update loop over a team. Learning roles update
/// simultaneously on disjoint batches.
template <class S>
class Trainer {
 public:
  Trainer(TrainConfig config, sim::ScenarioConfig scenario, Team<S> team)
      : config_(std::move(config)),
        scenario_(std::move(scenario)),
        team_(std::move(team)),
        envs_(scenario_, config_.envs, derive_seed(config_.seed, 2)),
        rng_(make_rng(derive_seed(config_.seed, 1))) {
    config_.validate();
    check_compatible(team_, scenario_);
    rollout_length_ = config_.rollout_length > 0 ? config_.rollout_length : scenario_.horizon;
    const long per_update = static_cast<long>(config_.envs) * rollout_length_;
    total_updates_ = static_cast<int>((config_.total_steps + per_update - 1) / per_update);
    bool learner = false;
    for (auto& s : team_.slots) {
      optimizers_.emplace_back();
      if (s.control == Control::Learn) {
        optimizers_.back().emplace(s.policy->params());
        learner = true;
      }
    }
    if (!learner) throw ConfigError("training needs at least one learning role");
  }

  bool finished() const { return updates_ >= total_updates_; }
  int updates() const { return updates_; }
  int total_updates() const { return total_updates_; }
  long steps() const { return steps_; }
  Team<S>& team() { return team_; }
  const std::vector<MetricsRow>& metrics() const { return metrics_; }
  const sim::ScenarioConfig& scenario() const { return scenario_; }

  /// One collect + update iteration; returns the rows it appended.
  std::span<const MetricsRow> update() {
    require(!finished(), "training budget exhausted");
    const double lr = config_.lr_decay
                          ? config_.learning_rate * (1.0 - static_cast<double>(updates_) / total_updates_)
                          : config_.learning_rate;
    auto batch = collect_rollouts(envs_, team_, rollout_length_, rng_);
    steps_ += static_cast<long>(envs_.size()) * rollout_length_;
    ++updates_;
    const std::size_t first = metrics_.size();
    for (std::size_t s = 0; s < team_.slots.size(); ++s) {
      auto& slot = team_.slots[s];
      if (slot.control != Control::Learn) continue;
      auto& rb = batch.role(slot.role);
      compute_gae(rb, config_.gamma, config_.lambda);
      const auto st = ppo_update(*slot.policy, *optimizers_[s], rb, config_, lr, rng_);
      MetricsRow row;
      row.step = steps_;
      row.update = updates_;
      row.role = slot.role;
      row.mean_episode_reward = batch.mean_episode_reward(slot.role);
      row.policy_loss = st.policy_loss;
      row.value_loss = st.value_loss;
      row.entropy = st.entropy;
      row.approx_kl = st.approx_kl;
      row.clip_fraction = st.clip_fraction;
      row.grad_norm = st.grad_norm;
      row.learning_rate = lr;
      metrics_.push_back(row);
    }
    const bool eval_now = config_.eval_interval > 0 && config_.eval_episodes > 0 &&
                          (updates_ % config_.eval_interval == 0 || finished());
    if (eval_now) {
      const auto rewards = greedy_episode_rewards(team_, scenario_, config_.eval_episodes,
                                                  derive_seed(config_.seed, 3));
      for (std::size_t i = first; i < metrics_.size(); ++i)
        for (std::size_t s = 0; s < team_.slots.size(); ++s)
          if (team_.slots[s].role == metrics_[i].role && !rewards[s].empty()) {
            double m = 0.0;
            for (double x : rewards[s]) m += x;
            metrics_[i].eval_reward = m / static_cast<double>(rewards[s].size());
          }
    }
    return std::span<const MetricsRow>(metrics_).subspan(first);
  }

  void run(const std::function<void(std::span<const MetricsRow>)>& on_update = {}) {
    while (!finished()) {
      auto rows = update();
      if (on_update) on_update(rows);
    }
  }

 private:
  TrainConfig config_;
  sim::ScenarioConfig scenario_;
  Team<S> team_;
  VecEnv envs_;
  Rng rng_;
  std::vector<std::optional<nn::Adam<S>>> optimizers_;
  int rollout_length_ = 0;
  int total_updates_ = 0;
  int updates_ = 0;
  long steps_ = 0;
  std::vector<MetricsRow> metrics_;
};

template <class S>
struct TrainResult {
  Team<S> team;
  std::vector<MetricsRow> metrics;
};

/// Trains a fresh team built from per-role specifications.
template <class S = float>
TrainResult<S> train(const TrainConfig& config, const sim::ScenarioConfig& scenario, std::span<const RoleSpec> specs,
                     const std::function<void(std::span<const MetricsRow>)>& on_update = {}) {
  config.validate();
  Trainer<S> t(config, scenario, make_team<S>(scenario, specs, derive_seed(config.seed, 0)));
  t.run(on_update);
  return {std::move(t.team()), t.metrics()};
}

/// Trains every controllable role of the scenario with one architecture.
template <class S = float>
TrainResult<S> train(const TrainConfig& config, const sim::ScenarioConfig& scenario, Arch arch,
                     const std::function<void(std::span<const MetricsRow>)>& on_update = {}) {
  const auto specs = uniform_specs(scenario.scenario, arch);
  return train<S>(config, scenario, specs, on_update);
}

}  // namespace lego::marl
