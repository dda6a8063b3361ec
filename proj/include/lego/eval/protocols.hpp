#pragma once

#include "lego/eval/report.hpp"
#include "lego/marl/trainer.hpp"

namespace lego::eval {

using marl::Team;
using policy::Arch;

inline constexpr std::uint64_t kEvalStream = 0xE7A1;

struct EvalOptions {
  int episodes = 50;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

/// Greedy rollouts of `team` on `scenario`. An architecture that cannot read
/// the scenario yields a report marked incompatible rather than an exception.
template <class S>
EvalReport evaluate(Team<S>& team, const sim::ScenarioConfig& scenario, const EvalOptions& opt,
                    Provenance provenance = {}, const marl::StepObserver& observer = {}) {
  require(opt.episodes > 0 && !opt.seeds.empty(), "evaluate needs episodes and seeds");
  EvalReport r;
  r.scenario = scenario.describe();
  r.agents = scenario.scenario == sim::Scenario::Spread ? scenario.agents : scenario.pursuers + scenario.evaders;
  r.init = std::string(sim::init_name(scenario.init));
  r.seeds = opt.seeds;
  r.episodes = opt.episodes;
  r.provenance = std::move(provenance);
  try {
    marl::check_compatible(team, scenario);
  } catch (const ConfigError& e) {
    r.compatible = false;
    r.error = e.what();
    return r;
  }
  for (const auto& slot : team.slots) r.roles.push_back({slot.role, {}, {}});
  for (auto seed : opt.seeds) {
    const auto rewards =
        marl::greedy_episode_rewards(team, scenario, opt.episodes, derive_seed(seed, kEvalStream), observer);
    for (std::size_t k = 0; k < rewards.size(); ++k) r.roles[k].per_seed.push_back(eval::aggregate(rewards[k]).mean);
  }
  for (auto& x : r.roles) x.aggregate = eval::aggregate(x.per_seed);
  return r;
}

struct OracleResult {
  std::vector<double> episode_rewards;
  double mean = 0.0;
  double stddev = 0.0;
  double ci95 = 0.0;  // half-width of the normal 95% interval on the mean
};

/// Random-policy baseline measured by direct simulation: every agent of every
/// role draws marl::random_action each step; reports the team-mean episode
/// reward of `role`.
inline OracleResult random_policy_oracle(const sim::ScenarioConfig& scenario, int episodes, std::uint64_t seed,
                                         std::optional<Role> role = std::nullopt) {
  const Role target = role.value_or(sim::controllable_roles(scenario.scenario).front());
  OracleResult o;
  for (int e = 0; e < episodes; ++e) {
    auto w = sim::reset(scenario, derive_seed(seed, static_cast<std::uint64_t>(e)));
    Rng rng = make_rng(derive_seed(seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(e)));
    const auto agents = sim::controllable_indices(w);
    std::vector<double> totals(agents.size(), 0.0);
    std::vector<Vec2> actions(agents.size());
    while (w.time_step < w.horizon) {
      for (auto& a : actions) a = marl::random_action(rng);
      auto step = sim::step(w, actions);
      for (std::size_t k = 0; k < agents.size(); ++k) totals[k] += step.rewards[k];
      w = std::move(step.state);
    }
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < agents.size(); ++k)
      if (w.entities[agents[k]].role == target) {
        sum += totals[k];
        ++count;
      }
    o.episode_rewards.push_back(sum / count);
  }
  const auto a = aggregate(o.episode_rewards);
  o.mean = a.mean;
  o.stddev = a.stddev;
  o.ci95 = 1.96 * a.stddev / std::sqrt(static_cast<double>(episodes));
  return o;
}

/// Spread scenario with `n` agents and `n` landmarks, other settings kept.
inline sim::ScenarioConfig with_team_size(sim::ScenarioConfig c, int n) {
  require(c.scenario == sim::Scenario::Spread, "team-size scaling is defined for Spread");
  c.agents = n;
  c.landmarks = n;
  return c;
}

template <class S>
Team<S> clone_team(const Team<S>& team) {
  Team<S> out = team;
  for (auto& s : out.slots)
    if (s.policy) s.policy = std::make_shared<policy::RolePolicy<S>>(*s.policy);
  return out;
}

/// Evaluates a size-agnostic team at each target team size without touching
/// its parameters.
template <class S>
std::vector<EvalReport> zero_shot_scale(Team<S>& team, const sim::ScenarioConfig& base, std::span<const int> targets,
                                        const EvalOptions& opt, const Provenance& provenance = {}) {
  for (const auto& s : team.slots)
    if (s.policy && !policy::size_agnostic(s.policy->arch()))
      throw ConfigError(std::string(policy::arch_name(s.policy->arch())) +
                        " policies have a fixed observation width and cannot be scaled zero-shot");
  std::vector<EvalReport> out;
  for (int n : targets) out.push_back(evaluate(team, with_team_size(base, n), opt, provenance));
  return out;
}

template <class S>
struct CurriculumResult {
  Team<S> pretrained;
  Team<S> finetuned;
  std::vector<marl::MetricsRow> pretrain_metrics;
  std::vector<marl::MetricsRow> finetune_metrics;
  EvalReport curriculum;  // pretrained then finetuned on the target
  EvalReport scl;         // pretrained only, evaluated zero-shot on the target
};

/// Pretrains on `pretrain`, then continues from those parameters on `target`
/// with a fresh optimiser.
template <class S>
CurriculumResult<S> curriculum_train(const marl::TrainConfig& config, const sim::ScenarioConfig& pretrain,
                                     long pretrain_steps, const sim::ScenarioConfig& target, long finetune_steps,
                                     Arch arch, const EvalOptions& opt) {
  if (!policy::size_agnostic(arch))
    throw ConfigError(std::string(policy::arch_name(arch)) + " cannot be carried across team sizes");
  auto pre_cfg = config;
  pre_cfg.total_steps = pretrain_steps;
  auto pre = marl::train<S>(pre_cfg, pretrain, arch);
  CurriculumResult<S> r;
  r.pretrained = std::move(pre.team);
  r.pretrain_metrics = std::move(pre.metrics);
  r.scl = evaluate(r.pretrained, target, opt,
                   {std::string(policy::arch_name(arch)) + "-scl", pretrain.describe(), pretrain_steps});
  auto fine_cfg = config;
  fine_cfg.total_steps = finetune_steps;
  fine_cfg.seed = derive_seed(config.seed, 0xC0);
  marl::Trainer<S> trainer(fine_cfg, target, clone_team(r.pretrained));
  trainer.run();
  r.finetuned = std::move(trainer.team());
  r.finetune_metrics = trainer.metrics();
  r.curriculum = evaluate(r.finetuned, target, opt,
                          {std::string(policy::arch_name(arch)) + "-curr",
                           pretrain.describe() + " -> " + target.describe(), pretrain_steps + finetune_steps});
  return r;
}

template <class S>
struct CrossValidation {
  marl::TrainResult<S> training;
  EvalReport report;
};

/// Simultaneous Tag training with one specification per team (architecture
/// and control), e.g. LEGO pursuers against MLP or scripted evaders.
template <class S>
CrossValidation<S> cross_validate(const marl::TrainConfig& config, const sim::ScenarioConfig& tag,
                                  const marl::RoleSpec& pursuer, const marl::RoleSpec& evader, const EvalOptions& opt) {
  require(tag.scenario == sim::Scenario::TagOcclusion, "cross-validation runs on Tag");
  require(pursuer.role == Role::Pursuer && evader.role == Role::Evader, "cross_validate: role specs swapped");
  const marl::RoleSpec specs[] = {pursuer, evader};
  CrossValidation<S> cv{marl::train<S>(config, tag, specs), {}};
  auto label = [](const marl::RoleSpec& s) {
    return marl::uses_policy(s.control) ? std::string(policy::arch_name(s.arch)) : std::string(marl::control_name(s.control));
  };
  cv.report = evaluate(cv.training.team, tag, opt,
                       {label(pursuer) + "-pursuer/" + label(evader) + "-evader", tag.describe(), config.total_steps});
  return cv;
}

/// Evaluates a Spread team on its training init and on each test init.
template <class S>
std::vector<EvalReport> ood_eval(Team<S>& team, const sim::ScenarioConfig& trained, std::span<const sim::InitDistribution> tests,
                                 const EvalOptions& opt, const Provenance& provenance = {}) {
  require(trained.scenario == sim::Scenario::Spread, "OOD evaluation is defined for Spread");
  std::vector<EvalReport> out{evaluate(team, trained, opt, provenance)};
  for (auto init : tests) {
    auto c = trained;
    c.init = init;
    out.push_back(evaluate(team, c, opt, provenance));
  }
  return out;
}

/// Relative gap |a - b| / |b|.
inline double relative_gap(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace lego::eval
