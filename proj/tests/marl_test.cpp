#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lego/marl.hpp"

namespace {

using namespace lego;
using namespace lego::marl;

std::vector<std::uint8_t> no_dones(std::size_t n) { return std::vector<std::uint8_t>(n, 0); }

// Direct summation: A_t = sum_k gamma^k r_{t+k} (+ gamma^{n-t} V_boot) - V_t, truncated at terminals.
std::vector<double> monte_carlo_advantages(const std::vector<double>& r, const std::vector<double>& v,
                                           const std::vector<std::uint8_t>& d, double boot, double gamma) {
  std::vector<double> a(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    double g = 0.0, discount = 1.0;
    std::size_t k = t;
    bool terminal = false;
    for (; k < r.size(); ++k) {
      g += discount * r[k];
      discount *= gamma;
      if (d[k]) {
        terminal = true;
        break;
      }
    }
    if (!terminal) g += discount * boot;
    a[t] = g - v[t];
  }
  return a;
}

TEST(Gae, TerminalSingleStep) {
  const std::vector<double> r{2.5}, v{0.7};
  const std::vector<std::uint8_t> d{1};
  const auto g = compute_gae(r, v, d, 123.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(g.advantages[0], 2.5 - 0.7);
  EXPECT_DOUBLE_EQ(g.returns[0], 2.5);
}

TEST(Gae, MyopicLimit) {
  const std::vector<double> r{1, -2, 3, 0.5}, v{0.1, 0.2, -0.3, 0.4};
  const auto g = compute_gae(r, v, no_dones(4), 9.0, 1e-300, 0.95);
  for (std::size_t t = 0; t < r.size(); ++t) EXPECT_NEAR(g.advantages[t], r[t] - v[t], 1e-12);
}

TEST(Gae, ThreeStepHandExample) {
  const std::vector<double> r{1.0, 0.0, -1.0}, v{0.5, 0.25, -0.5};
  const auto g = compute_gae(r, v, no_dones(3), 2.0, 0.99, 1.0);
  const double a0 = 1.0 + 0.99 * 0.0 + 0.99 * 0.99 * -1.0 + std::pow(0.99, 3) * 2.0 - 0.5;
  const double a1 = 0.0 - 0.99 + 0.99 * 0.99 * 2.0 - 0.25;
  const double a2 = -1.0 + 0.99 * 2.0 + 0.5;
  EXPECT_NEAR(g.advantages[0], a0, 1e-12);
  EXPECT_NEAR(g.advantages[1], a1, 1e-12);
  EXPECT_NEAR(g.advantages[2], a2, 1e-12);
}

TEST(Gae, LambdaOneMatchesMonteCarloOnRandomSequences) {
  Rng rng = make_rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform(rng, 0, 60));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = uniform(rng, -5, 5);
      v[t] = uniform(rng, -5, 5);
      d[t] = uniform(rng, 0, 1) < 0.1;
    }
    const double boot = uniform(rng, -5, 5), gamma = uniform(rng, 0.5, 1.0);
    const auto g = compute_gae(r, v, d, boot, gamma, 1.0);
    const auto oracle = monte_carlo_advantages(r, v, d, boot, gamma);
    for (std::size_t t = 0; t < n; ++t) ASSERT_NEAR(g.advantages[t], oracle[t], 1e-10);
  }
}

TEST(Gae, RejectsBadInput) {
  const std::vector<double> r{1, 2}, v{1};
  EXPECT_THROW(compute_gae(r, v, no_dones(2), 0, 0.9, 0.9), ContractError);
  const std::vector<double> v2{1, 2};
  EXPECT_THROW(compute_gae(r, v2, no_dones(2), 0, 1.5, 0.9), ContractError);
}

TEST(Gae, NormalizedAdvantagesHaveUnitMoments) {
  Rng rng = make_rng(3);
  std::vector<double> a(777);
  for (auto& x : a) x = uniform(rng, -3, 40);
  normalize_advantages(a);
  double m = 0, s = 0;
  for (double x : a) m += x;
  m /= a.size();
  for (double x : a) s += (x - m) * (x - m);
  EXPECT_LT(std::abs(m), 1e-6);
  EXPECT_LT(std::abs(std::sqrt(s / a.size()) - 1.0), 1e-6);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.clip = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Rollout, CountsTransitions) {
  const auto scenario = sim::ScenarioConfig::spread(3);
  const auto specs = uniform_specs(scenario.scenario, Arch::Lego);
  auto team = make_team<double>(scenario, specs, 1);
  VecEnv envs(scenario, 2, 5);
  Rng rng = make_rng(2);
  auto batch = collect_rollouts(envs, team, 25, rng);
  ASSERT_EQ(batch.roles.size(), 1u);
  EXPECT_EQ(batch.roles[0].size(), 150u);
  EXPECT_EQ(batch.roles[0].tracks, 6u);
  EXPECT_EQ(batch.episode_rewards[0].size(), 2u);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(batch.roles[0].dones[24 * 6 + k], 1);
}

TEST(Rollout, TagHasOneBatchPerLearningRole) {
  const auto scenario = sim::ScenarioConfig::tag();
  const std::vector<RoleSpec> specs{{Role::Pursuer, Arch::Lego, Control::Learn}, {Role::Evader, Arch::Mlp, Control::Learn}};
  auto team = make_team<float>(scenario, specs, 1);
  EXPECT_EQ(team.slots.size(), 2u);
  VecEnv envs(scenario, 2, 5);
  Rng rng = make_rng(2);
  auto batch = collect_rollouts(envs, team, 10, rng);
  EXPECT_EQ(batch.role(Role::Pursuer).size(), 2u * 10u * 3u);
  EXPECT_EQ(batch.role(Role::Evader).size(), 2u * 10u * 2u);
  EXPECT_TRUE(batch.episode_rewards[0].empty());
  EXPECT_FALSE(batch.role(Role::Pursuer).views.front().critic_is_actor);
}

TEST(Rollout, SameSeedSameBatch) {
  const auto scenario = sim::ScenarioConfig::spread(3);
  auto run = [&] {
    auto team = make_team<double>(scenario, uniform_specs(scenario.scenario, Arch::Gcn), 4);
    VecEnv envs(scenario, 3, 8);
    Rng rng = make_rng(6);
    return collect_rollouts(envs, team, 40, rng);
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.roles[0].raw_actions, b.roles[0].raw_actions);
  EXPECT_EQ(a.roles[0].log_probs, b.roles[0].log_probs);
  EXPECT_EQ(a.roles[0].rewards, b.roles[0].rewards);
  EXPECT_EQ(a.roles[0].bootstrap, b.roles[0].bootstrap);
}

TEST(Rollout, StoredViewsReproduceLogProbs) {
  const auto scenario = sim::ScenarioConfig::spread(3);
  auto team = make_team<double>(scenario, uniform_specs(scenario.scenario, Arch::Lego), 4);
  VecEnv envs(scenario, 2, 8);
  Rng rng = make_rng(6);
  auto batch = collect_rollouts(envs, team, 5, rng);
  auto& rb = batch.roles[0];
  std::vector<const policy::Observation*> actor;
  nn::Matrix<double> actions(static_cast<Eigen::Index>(rb.size()), 2);
  for (std::size_t i = 0; i < rb.size(); ++i) {
    actor.push_back(&rb.views[i].actor);
    actions.row(static_cast<Eigen::Index>(i)) << rb.raw_actions[i].x(), rb.raw_actions[i].y();
  }
  nn::Tape<double> tape;
  const auto e = team.slots[0].policy->evaluate_actions(tape, actor, {}, actions);
  for (std::size_t i = 0; i < rb.size(); ++i)
    EXPECT_NEAR(e.log_prob.value()(static_cast<Eigen::Index>(i), 0), rb.log_probs[i], 1e-9);
}

TEST(Rollout, EpisodeBoundariesMidRollout) {
  const auto scenario = sim::ScenarioConfig::spread(2);
  auto team = make_team<double>(scenario, uniform_specs(scenario.scenario, Arch::Lego), 4);
  VecEnv envs(scenario, 1, 8);
  Rng rng = make_rng(6);
  auto batch = collect_rollouts(envs, team, 60, rng);
  EXPECT_EQ(batch.episode_rewards[0].size(), 2u);
  const auto& d = batch.roles[0].dones;
  for (std::size_t t = 0; t < 60; ++t) EXPECT_EQ(d[2 * t], (t == 24 || t == 49) ? 1 : 0);
  EXPECT_EQ(envs.state(0).time_step, 10);
}

TEST(Rollout, MlpWidthMismatchIsConfigError) {
  auto team = make_team<float>(sim::ScenarioConfig::spread(3), uniform_specs(sim::Scenario::Spread, Arch::Mlp), 1);
  VecEnv envs(sim::ScenarioConfig::spread(4), 1, 0);
  Rng rng = make_rng(0);
  EXPECT_THROW(collect_rollouts(envs, team, 1, rng), ConfigError);
}

TEST(Ppo, ClipBlocksGradientBeyondTrustRegion) {
  nn::Tape<double> tape;
  nn::Matrix<double> rho(3, 1), adv(3, 1);
  rho << 1.5, 0.5, 1.1;
  adv << 1.0, -1.0, 1.0;
  nn::ParameterStore<double> store;
  store.add("rho", 3, 1).value = rho;
  auto rp = tape.param(store[0]);
  auto a = tape.constant(adv);
  auto s = nn::sum(nn::minimum(nn::mul(rp, a), nn::mul(nn::clamp(rp, 0.8, 1.2), a)));
  tape.backward(s);
  EXPECT_EQ(store[0].grad(0, 0), 0.0);  // A > 0, rho > 1 + eps
  EXPECT_EQ(store[0].grad(1, 0), 0.0);  // A < 0, rho < 1 - eps
  EXPECT_EQ(store[0].grad(2, 0), 1.0);
}

TEST(Ppo, IdentityUpdateHasZeroSurrogate) {
  const auto scenario = sim::ScenarioConfig::spread(3);
  auto team = make_team<double>(scenario, uniform_specs(scenario.scenario, Arch::Lego), 4);
  VecEnv envs(scenario, 2, 8);
  Rng rng = make_rng(6);
  auto batch = collect_rollouts(envs, team, 25, rng);
  compute_gae(batch.roles[0], 0.99, 0.95);
  TrainConfig cfg;
  cfg.ppo_epochs = 1;
  cfg.minibatches = 1;
  nn::Adam<double> opt(team.slots[0].policy->params());
  const auto st = ppo_update(*team.slots[0].policy, opt, batch.roles[0], cfg, 5e-4, rng);
  EXPECT_LT(std::abs(st.policy_loss), 1e-9);
  EXPECT_LT(std::abs(st.approx_kl), 1e-12);
  EXPECT_EQ(st.clip_fraction, 0.0);
  EXPECT_GT(st.grad_norm, 0.0);
}

TEST(Ppo, NanLossAborts) {
  const auto scenario = sim::ScenarioConfig::spread(2);
  auto team = make_team<double>(scenario, uniform_specs(scenario.scenario, Arch::Lego), 4);
  VecEnv envs(scenario, 1, 8);
  Rng rng = make_rng(6);
  auto batch = collect_rollouts(envs, team, 25, rng);
  compute_gae(batch.roles[0], 0.99, 0.95);
  batch.roles[0].log_probs[3] = std::numeric_limits<double>::quiet_NaN();
  nn::Adam<double> opt(team.slots[0].policy->params());
  EXPECT_THROW(ppo_update(*team.slots[0].policy, opt, batch.roles[0], TrainConfig{}, 5e-4, rng), NumericalError);
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig c;
  c.total_steps = 4 * 4 * 25;
  c.envs = 4;
  c.ppo_epochs = 2;
  c.minibatches = 2;
  c.eval_interval = 2;
  c.eval_episodes = 2;
  c.seed = seed;
  return c;
}

TEST(Train, RepeatedRunsProduceIdenticalMetrics) {
  auto csv = [](const TrainResult<float>& r) {
    std::ostringstream os;
    write_metrics(os, r.metrics);
    return os.str();
  };
  const auto a = train<float>(tiny_config(11), sim::ScenarioConfig::spread(3), Arch::Lego);
  const auto b = train<float>(tiny_config(11), sim::ScenarioConfig::spread(3), Arch::Lego);
  const auto c = train<float>(tiny_config(12), sim::ScenarioConfig::spread(3), Arch::Lego);
  EXPECT_EQ(csv(a), csv(b));
  EXPECT_NE(csv(a), csv(c));
  const auto& pa = a.team.slots[0].policy->params();
  const auto& pb = b.team.slots[0].policy->params();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].value, pb[i].value);
}

TEST(Train, MetricsAreMonotoneAndComplete) {
  const auto r = train<float>(tiny_config(1), sim::ScenarioConfig::tag(), Arch::Lego);
  ASSERT_EQ(r.metrics.size(), 2u * 1u);  // 100-step horizon: one update of 4 envs
  EXPECT_EQ(r.metrics[0].role, Role::Pursuer);
  EXPECT_EQ(r.metrics[1].role, Role::Evader);
  EXPECT_TRUE(r.metrics[0].eval_reward.has_value());
  const auto s = train<float>(tiny_config(1), sim::ScenarioConfig::spread(2), Arch::Mlp);
  ASSERT_EQ(s.metrics.size(), 4u);
  for (std::size_t i = 1; i < s.metrics.size(); ++i) EXPECT_GT(s.metrics[i].step, s.metrics[i - 1].step);
  EXPECT_FALSE(s.metrics[0].eval_reward.has_value());
  EXPECT_TRUE(s.metrics[1].eval_reward.has_value());
  EXPECT_TRUE(std::isfinite(s.metrics.back().mean_episode_reward));
}

TEST(Train, ScriptedOpponentsAreNotTrained) {
  const std::vector<RoleSpec> specs{{Role::Pursuer, Arch::Lego, Control::Learn}, {Role::Evader, Arch::Lego, Control::Flee}};
  const auto r = train<float>(tiny_config(1), sim::ScenarioConfig::tag(), specs);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_EQ(r.metrics[0].role, Role::Pursuer);
  EXPECT_EQ(r.team.slot(Role::Evader).policy, nullptr);
  const std::vector<RoleSpec> none{{Role::Pursuer, Arch::Lego, Control::Pursue}, {Role::Evader, Arch::Lego, Control::Flee}};
  EXPECT_THROW(train<float>(tiny_config(1), sim::ScenarioConfig::tag(), none), ConfigError);
}

TEST(Scripted, PursueAndFleeAreUnitHeadings) {
  auto w = sim::reset(sim::ScenarioConfig::tag(), 3);
  const auto agents = sim::controllable_indices(w);
  for (auto i : agents) {
    const Vec2 a = w.entities[i].role == Role::Pursuer ? pursue_action(w, i) : flee_action(w, i);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  }
  w.entities[0].position = Vec2(0, 0);
  w.entities[3].position = Vec2(0.5, 0);
  EXPECT_GT(pursue_action(w, 0).x(), 0.0);
  EXPECT_GT(flee_action(w, 3).x(), 0.0);
}

}  // namespace
