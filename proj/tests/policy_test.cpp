#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "lego/check/gradients.hpp"
#include "lego/check/transforms.hpp"
#include "lego/policy/role_policy.hpp"

namespace {

using namespace lego;
using namespace lego::policy;

PolicyConfig small_config(Arch arch, const sim::ScenarioConfig& scenario, std::uint64_t seed, Role role) {
  auto c = default_policy_config(arch, role, scenario, seed);
  c.attention = {8, 2, 16};
  c.hidden = 16;
  c.actor_output_gain = 1.0;
  return c;
}

std::vector<AgentView> views_of(Arch arch, const sim::WorldState& w, Role role) {
  std::vector<AgentView> out;
  const auto schema = sim::role_schema(w.scenario);
  for (auto i : sim::controllable_indices(w))
    if (w.entities[i].role == role) out.push_back(observe(arch, w, i, schema));
  return out;
}

std::vector<ActionSample> act_all(RolePolicy<double>& p, const std::vector<AgentView>& views) {
  std::vector<const AgentView*> ptrs;
  for (const auto& v : views) ptrs.push_back(&v);
  return p.act(ptrs, nullptr, true);
}

TEST(CapNorm, CommutesWithRotation) {
  Rng rng = make_rng(1);
  for (int i = 0; i < 500; ++i) {
    const Vec2 a(uniform(rng, -3, 3), uniform(rng, -3, 3));
    const auto g = check::random_isometry(rng, i);
    EXPECT_LT((cap_norm(Vec2(g.linear * a), 1.0) - g.linear * cap_norm(a, 1.0)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE(cap_norm(a, 1.0).norm(), 1.0 + 1e-15);
  }
}

TEST(Act, DeterministicIdentityFrameReturnsCappedMean) {
  const auto scenario = sim::ScenarioConfig::spread(3);
  RolePolicy<double> p(small_config(Arch::Mlp, scenario, 3, Role::Agent));
  const auto w = sim::reset(scenario, 4);
  const auto views = views_of(Arch::Mlp, w, Role::Agent);
  const auto s = act_all(p, views);
  nn::Tape<double> tape(false);
  std::vector<const Observation*> obs;
  for (const auto& v : views) obs.push_back(&v.actor);
  const auto mean = p.forward(tape, obs).mean.value();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const Vec2 mu(mean(static_cast<Eigen::Index>(k), 0), mean(static_cast<Eigen::Index>(k), 1));
    EXPECT_EQ(s[k].global_action, cap_norm(mu, 1.0));
    EXPECT_EQ(s[k].raw_action, mu);
  }
}

TEST(Act, SameSeedSameSample) {
  const auto scenario = sim::ScenarioConfig::tag();
  RolePolicy<double> p(small_config(Arch::Lego, scenario, 5, Role::Pursuer));
  const auto w = sim::reset(scenario, 6);
  const auto views = views_of(Arch::Lego, w, Role::Pursuer);
  Rng a = make_rng(9), b = make_rng(9);
  const auto sa = p.act(views[0], &a, false), sb = p.act(views[0], &b, false);
  EXPECT_EQ(sa.raw_action, sb.raw_action);
  EXPECT_EQ(sa.log_prob, sb.log_prob);
  EXPECT_EQ(sa.value, sb.value);
  EXPECT_LE(sa.local_action.norm(), 1.0 + 1e-12);
  EXPECT_NEAR(sa.global_action.norm(), sa.local_action.norm(), 1e-9);
}

TEST(Act, EquivariantUnderWorldIsometries) {
  for (auto scenario : {sim::ScenarioConfig::spread(3), sim::ScenarioConfig::tag()}) {
    const Role role = sim::controllable_roles(scenario.scenario).front();
    RolePolicy<double> p(small_config(Arch::Lego, scenario, 17, role));
    Rng rng = make_rng(21);
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
      const auto w = check::random_world(scenario, rng);
      const auto base = act_all(p, views_of(Arch::Lego, w, role));
      for (int k = 0; k < 5; ++k) {
        const auto g = check::random_isometry(rng, k);
        const auto moved = act_all(p, views_of(Arch::Lego, check::transform(w, g), role));
        for (std::size_t a = 0; a < base.size(); ++a)
          worst = std::max(worst, (moved[a].global_action - g.linear * base[a].global_action).cwiseAbs().maxCoeff());
      }
    }
    EXPECT_LT(worst, 1e-10);
  }
}

TEST(Act, MlpBaselineIsNotEquivariant) {
  const auto scenario = sim::ScenarioConfig::spread(3);
  RolePolicy<double> p(small_config(Arch::Mlp, scenario, 17, Role::Agent));
  Rng rng = make_rng(2);
  const auto w = check::random_world(scenario, rng);
  const auto g = check::Isometry::rotation(1.0);
  const auto base = act_all(p, views_of(Arch::Mlp, w, Role::Agent));
  const auto moved = act_all(p, views_of(Arch::Mlp, check::transform(w, g), Role::Agent));
  EXPECT_GT((moved[0].global_action - g.linear * base[0].global_action).norm(), 1e-4);
}

TEST(Act, ShapeSafeAcrossTeamSizes) {
  RolePolicy<double> p(small_config(Arch::Lego, sim::ScenarioConfig::spread(4), 1, Role::Agent));
  for (int n : {1, 2, 3, 5, 6, 8}) {
    const auto w = sim::reset(sim::ScenarioConfig::spread(n), static_cast<std::uint64_t>(n));
    const auto s = act_all(p, views_of(Arch::Lego, w, Role::Agent));
    EXPECT_EQ(s.size(), static_cast<std::size_t>(n));
    for (const auto& a : s) EXPECT_TRUE(std::isfinite(a.global_action.x()));
  }
}

TEST(Act, RelabelingAgentsPermutesJointAction) {
  const auto scenario = sim::ScenarioConfig::spread(4);
  RolePolicy<double> p(small_config(Arch::Lego, scenario, 2, Role::Agent));
  Rng rng = make_rng(4);
  const auto w = check::random_world(scenario, rng);
  auto relabeled = w;
  std::swap(relabeled.entities[0], relabeled.entities[2]);
  std::swap(relabeled.entities[1], relabeled.entities[3]);
  const auto a = act_all(p, views_of(Arch::Lego, w, Role::Agent));
  const auto b = act_all(p, views_of(Arch::Lego, relabeled, Role::Agent));
  const std::vector<std::size_t> perm{2, 3, 0, 1};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_LT((b[k].global_action - a[perm[k]].global_action).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EvaluateActions, ReproducesStoredLogProb) {
  const auto scenario = sim::ScenarioConfig::tag();
  RolePolicy<double> p(small_config(Arch::Lego, scenario, 8, Role::Evader));
  const auto w = sim::reset(scenario, 2);
  const auto views = views_of(Arch::Lego, w, Role::Evader);
  Rng rng = make_rng(3);
  std::vector<ActionSample> samples;
  for (const auto& v : views) samples.push_back(p.act(v, &rng, false));
  std::vector<const Observation*> actor, critic;
  nn::Matrix<double> actions(static_cast<Eigen::Index>(views.size()), 2);
  for (std::size_t k = 0; k < views.size(); ++k) {
    actor.push_back(&views[k].actor);
    critic.push_back(&critic_input(views[k]));
    actions.row(static_cast<Eigen::Index>(k)) << samples[k].raw_action.x(), samples[k].raw_action.y();
  }
  nn::Tape<double> tape;
  const auto e = p.evaluate_actions(tape, actor, critic, actions);
  for (std::size_t k = 0; k < views.size(); ++k) {
    EXPECT_NEAR(e.log_prob.value()(static_cast<Eigen::Index>(k), 0), samples[k].log_prob, 1e-9);
    EXPECT_NEAR(p.value_normalizer().denormalize(e.value.value()(static_cast<Eigen::Index>(k), 0)), samples[k].value,
                1e-9);
  }
  nn::Tape<double> t2;
  EXPECT_THROW(p.evaluate_actions(t2, actor, critic, nn::Matrix<double>::Zero(1, 2)), ContractError);
}

TEST(EvaluateActions, ClosedFormDensityAndEntropy) {
  const auto scenario = sim::ScenarioConfig::spread(2);
  auto config = small_config(Arch::Mlp, scenario, 1, Role::Agent);
  config.log_std_init = 0.0;
  RolePolicy<double> p(config);
  nn::Tape<double> tape;
  nn::Matrix<double> mean(1, 2);
  mean << 0.3, -0.4;
  const auto lp = p.gaussian_log_prob(tape, tape.constant(mean), mean);
  EXPECT_NEAR(lp.value()(0, 0), -std::log(2 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(p.entropy(tape).value()(0, 0), 1.0 + std::log(2 * std::numbers::pi), 1e-14);
}

TEST(Encode, EmptyBucketsPoolToZero) {
  const auto scenario = sim::ScenarioConfig::tag();
  RolePolicy<double> p(small_config(Arch::Lego, scenario, 4, Role::Pursuer));
  Observation o;
  o.graphs.schema = sim::role_schema(scenario.scenario);
  o.graphs.buckets.resize(o.graphs.schema.size());
  o.graphs.buckets[0].push_back({0.4, 0, 0, 0});
  const Observation* batch[] = {&o};
  nn::Tape<double> tape(false);
  const auto s = p.encode(tape, batch).value();
  EXPECT_EQ(s.cols(), 4 * 8);
  EXPECT_GT(s.leftCols(8).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.rightCols(24), nn::Matrix<double>::Zero(1, 24));
}

graph::RoleGraphs random_graphs(Rng& rng, const std::vector<Role>& schema) {
  graph::RoleGraphs g;
  g.schema = schema;
  g.buckets.resize(schema.size());
  g.buckets[0].push_back({uniform(rng, 0, 1), 0, 0, 0});
  for (std::size_t r = 1; r < schema.size(); ++r) {
    const int n = 1 + static_cast<int>(uniform(rng, 0, 5));
    for (int k = 0; k < n; ++k)
      g.buckets[r].push_back({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)});
  }
  return g;
}

nn::Matrix<double> encode_one(RolePolicy<double>& p, const graph::RoleGraphs& g) {
  Observation o;
  o.graphs = g;
  const Observation* batch[] = {&o};
  nn::Tape<double> tape(false);
  return p.encode(tape, batch).value();
}

TEST(Encode, InvariantToNodeOrderAndDuplication) {
  const auto scenario = sim::ScenarioConfig::tag();
  RolePolicy<double> p(small_config(Arch::Lego, scenario, 6, Role::Pursuer));
  Rng rng = make_rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_graphs(rng, sim::role_schema(scenario.scenario));
    const auto base = encode_one(p, g);
    auto shuffled = g;
    for (auto& b : shuffled.buckets) std::shuffle(b.begin(), b.end(), rng);
    EXPECT_LT((encode_one(p, shuffled) - base).cwiseAbs().maxCoeff(), 1e-12);
    auto doubled = g;
    for (auto& b : doubled.buckets) {
      const auto copy = b;
      b.insert(b.end(), copy.begin(), copy.end());
    }
    EXPECT_LT((encode_one(p, doubled) - base).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Gradients, PolicyEndToEnd) {
  for (Arch arch : {Arch::Lego, Arch::Mlp, Arch::MlpLocal, Arch::Gcn}) {
    const auto scenario = sim::ScenarioConfig::tag();
    auto config = small_config(arch, scenario, 12, Role::Pursuer);
    config.attention = {4, 2, 6};
    config.hidden = 6;
    config.layers = 1;
    RolePolicy<double> p(config);
    Rng rng = make_rng(13);
    const auto w = check::random_world(scenario, rng);
    const auto views = views_of(arch, w, Role::Pursuer);
    std::vector<const Observation*> actor, critic;
    nn::Matrix<double> actions(static_cast<Eigen::Index>(views.size()), 2);
    for (std::size_t k = 0; k < views.size(); ++k) {
      actor.push_back(&views[k].actor);
      critic.push_back(&critic_input(views[k]));
      actions.row(static_cast<Eigen::Index>(k)) << uniform(rng, -1, 1), uniform(rng, -1, 1);
    }
    const auto report = check::finite_difference_check(p.params(), [&](nn::Tape<double>& tape) {
      auto e = p.evaluate_actions(tape, actor, critic, actions);
      return nn::add(nn::add(nn::sum(e.log_prob), nn::sum(nn::square(e.value))), nn::scale(e.entropy, 0.3));
    });
    EXPECT_LT(report.max_relative_error, 1e-4) << arch_name(arch) << " " << report.worst_parameter;
  }
}

TEST(Observation, MlpWidthMatchesRawCount) {
  for (int n : {2, 3, 5}) {
    const auto scenario = sim::ScenarioConfig::spread(n);
    const auto w = sim::reset(scenario, 0);
    const auto v = observe(Arch::Mlp, w, 0, sim::role_schema(scenario.scenario));
    EXPECT_EQ(v.actor.features.size(), static_cast<std::size_t>(4 + 4 * (n - 1) + 2 * n));
    EXPECT_EQ(flat_width(scenario), v.actor.features.size());
  }
}

TEST(Observation, TagCriticSeesThroughObstacles) {
  auto w = sim::reset(sim::ScenarioConfig::tag(), 0);
  w.entities[0].position = Vec2(-1, 0);
  w.entities[3].position = Vec2(1, 0);
  w.entities[5].position = Vec2(0, 0);
  const auto v = observe(Arch::Lego, w, 0, sim::role_schema(w.scenario));
  EXPECT_FALSE(v.critic_is_actor);
  EXPECT_LT(v.actor.graphs.node_count(), v.critic.graphs.node_count());
  EXPECT_EQ(v.critic.graphs.node_count(), w.entities.size());
}

}  // namespace
