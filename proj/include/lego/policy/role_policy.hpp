#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include "lego/core/random.hpp"
#include "lego/nn/layers.hpp"
#include "lego/policy/observation.hpp"
#include "lego/policy/value_norm.hpp"

namespace lego::policy {

struct PolicyConfig {
  Arch arch = Arch::Lego;
  Role role = Role::Agent;
  std::vector<Role> schema;
  std::size_t flat_width = 0;  // Mlp / MlpLocal input width
  nn::AttentionSizes attention{};
  int layers = 2;
  Eigen::Index hidden = 64;
  double log_std_init = -0.5;
  double action_cap = 1.0;
  double actor_output_gain = 0.01;
  bool separate_critic_encoder = false;
  std::uint64_t seed = 0;
};

struct ActionSample {
  Vec2 raw_action = Vec2::Zero();     // pre-cap sample, scored by log_prob
  Vec2 local_action = Vec2::Zero();   // capped, agent frame
  Vec2 global_action = Vec2::Zero();  // world frame
  double log_prob = 0.0;
  double value = 0.0;
};

/// Radial cap: rescales `a` onto the ball of radius `cap` if it lies outside.
inline Vec2 cap_norm(const Vec2& a, double cap) {
  const double n = a.norm();
  return n > cap ? Vec2(a * (cap / n)) : a;
}

inline constexpr double kLog2Pi = 1.8378770664093453;

/// Actor and critic shared by every agent of one role.
template <class S>
class RolePolicy {
 public:
  struct Heads {
    nn::Var<S> mean;   // B x 2, local frame
    nn::Var<S> value;  // B x 1, normalised
  };
  struct Evaluation {
    nn::Var<S> log_prob;  // B x 1
    nn::Var<S> value;     // B x 1, normalised
    nn::Var<S> entropy;   // 1 x 1
  };

  RolePolicy() = default;

  explicit RolePolicy(PolicyConfig config) : config_(std::move(config)) {
    Rng rng = make_rng(config_.seed);
    build_trunk("actor", actor_trunk_, rng);
    if (config_.separate_critic_encoder) {
      critic_trunk_.emplace();
      build_trunk("critic", *critic_trunk_, rng);
    }
    const Eigen::Index feat = feature_width();
    actor_head_ = nn::Mlp<S>(params_, "actor.head", {feat, config_.hidden, config_.hidden, 2}, rng,
                             config_.actor_output_gain);
    critic_head_ = nn::Mlp<S>(params_, "critic.head", {feat, config_.hidden, config_.hidden, 1}, rng, 1.0);
    log_std_ = params_.size();
    params_.add("actor.log_std", 1, 2).value.setConstant(static_cast<S>(config_.log_std_init));
  }

  const PolicyConfig& config() const { return config_; }
  Arch arch() const { return config_.arch; }
  nn::ParameterStore<S>& params() { return params_; }
  const nn::ParameterStore<S>& params() const { return params_; }
  ValueNormalizer& value_normalizer() { return value_norm_; }
  const ValueNormalizer& value_normalizer() const { return value_norm_; }

  Eigen::Index feature_width() const {
    switch (config_.arch) {
      case Arch::Lego: return static_cast<Eigen::Index>(config_.schema.size()) * config_.attention.width;
      case Arch::Mlp:
      case Arch::MlpLocal: return static_cast<Eigen::Index>(config_.flat_width);
      case Arch::Gcn: return config_.attention.width;
    }
    return 0;
  }

  Vec2 std_dev() const {
    const auto& ls = params_[log_std_].value;
    return {std::exp(static_cast<double>(ls(0, 0))), std::exp(static_cast<double>(ls(0, 1)))};
  }

  /// Actor mean and critic value for a batch; `critic` may be empty when the
  /// critic consumes the actor inputs.
  Heads forward(nn::Tape<S>& tape, std::span<const Observation* const> actor,
                std::span<const Observation* const> critic = {}) {
    require(critic.empty() || critic.size() == actor.size(), "critic batch length mismatch");
    auto actor_features = encode(tape, actor_trunk_, actor);
    nn::Var<S> critic_features = actor_features;
    const Trunk& ct = critic_trunk_ ? *critic_trunk_ : actor_trunk_;
    if (!critic.empty() || critic_trunk_) critic_features = encode(tape, ct, critic.empty() ? actor : critic);
    return {actor_head_.forward(tape, params_, actor_features), critic_head_.forward(tape, params_, critic_features)};
  }

  /// Deterministic (mean) or sampled actions for a batch of agents.
  std::vector<ActionSample> act(std::span<const AgentView* const> views, Rng* rng, bool deterministic) {
    require(deterministic || rng != nullptr, "stochastic acting needs a random generator");
    std::vector<const Observation*> actor, critic;
    bool any_critic = false;
    for (const auto* v : views) any_critic = any_critic || !v->critic_is_actor;
    for (const auto* v : views) {
      actor.push_back(&v->actor);
      if (any_critic) critic.push_back(&critic_input(*v));
    }
    nn::Tape<S> tape(false);
    auto heads = forward(tape, actor, critic);
    const Vec2 sigma = std_dev();
    const double log_norm = std::log(sigma.x()) + std::log(sigma.y()) + kLog2Pi;
    std::vector<ActionSample> out(views.size());
    for (std::size_t b = 0; b < views.size(); ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      const Vec2 mu(static_cast<double>(heads.mean.value()(bi, 0)), static_cast<double>(heads.mean.value()(bi, 1)));
      auto& s = out[b];
      if (deterministic) {
        s.raw_action = mu;
      } else {
        s.raw_action = Vec2(mu.x() + sigma.x() * standard_normal(*rng), mu.y() + sigma.y() * standard_normal(*rng));
      }
      const Vec2 z = (s.raw_action - mu).cwiseQuotient(sigma);
      s.log_prob = -0.5 * z.squaredNorm() - log_norm;
      s.local_action = cap_norm(s.raw_action, config_.action_cap);
      s.global_action = canonical::decanonicalize_action(views[b]->frame, s.local_action);
      s.value = value_norm_.denormalize(static_cast<double>(heads.value.value()(bi, 0)));
    }
    return out;
  }

  ActionSample act(const AgentView& view, Rng* rng, bool deterministic) {
    const AgentView* p = &view;
    return act(std::span<const AgentView* const>(&p, 1), rng, deterministic).front();
  }

  /// Gaussian log-densities of stored pre-cap actions, critic values and the
  /// closed-form entropy under the current parameters.
  Evaluation evaluate_actions(nn::Tape<S>& tape, std::span<const Observation* const> actor,
                              std::span<const Observation* const> critic, const nn::Matrix<S>& raw_actions) {
    require(raw_actions.rows() == static_cast<Eigen::Index>(actor.size()) && raw_actions.cols() == 2,
            "evaluate_actions: action batch length mismatch");
    auto heads = forward(tape, actor, critic);
    return {gaussian_log_prob(tape, heads.mean, raw_actions), heads.value, entropy(tape)};
  }

  nn::Var<S> gaussian_log_prob(nn::Tape<S>& tape, nn::Var<S> mean, const nn::Matrix<S>& actions) {
    auto log_std = tape.param(params_[log_std_]);
    auto z = nn::mul_row(nn::sub(tape.constant(actions), mean), nn::exp(nn::scale(log_std, S(-1))));
    auto quad = nn::scale(nn::row_sum(nn::square(z)), S(-0.5));
    return nn::add_scalar(nn::add_row(quad, nn::scale(nn::sum(log_std), S(-1))), static_cast<S>(-kLog2Pi));
  }

  /// Actor-side encoding s_i of a batch (B x feature_width).
  nn::Var<S> encode(nn::Tape<S>& tape, std::span<const Observation* const> batch) {
    return encode(tape, actor_trunk_, batch);
  }

  nn::Var<S> entropy(nn::Tape<S>& tape) {
    return nn::add_scalar(nn::sum(tape.param(params_[log_std_])), static_cast<S>(1.0 + kLog2Pi));
  }

 private:
  struct Trunk {
    std::vector<nn::RoleEncoder<S>> encoders;  // Lego, one per schema role
    std::vector<nn::GcnLayer<S>> gcn;          // Gcn
  };

  void build_trunk(const std::string& prefix, Trunk& trunk, Rng& rng) {
    switch (config_.arch) {
      case Arch::Lego:
        require(!config_.schema.empty() && config_.schema.front() == Role::SelfAgent,
                "lego schema must start with the self role");
        for (Role r : config_.schema)
          trunk.encoders.emplace_back(params_, prefix + ".encoder." + std::string(role_name(r)),
                                      static_cast<Eigen::Index>(graph::kNodeWidth), config_.attention, config_.layers,
                                      rng);
        break;
      case Arch::Gcn: {
        Eigen::Index in = static_cast<Eigen::Index>(gcn_node_width(config_.schema));
        for (int l = 0; l < config_.layers; ++l) {
          trunk.gcn.emplace_back(params_, prefix + ".gcn" + std::to_string(l), in, config_.attention.width, rng);
          in = config_.attention.width;
        }
        break;
      }
      case Arch::Mlp:
      case Arch::MlpLocal:
        require(config_.flat_width > 0, "mlp architectures need a fixed observation width");
        break;
    }
  }

  nn::Var<S> encode(nn::Tape<S>& tape, const Trunk& trunk, std::span<const Observation* const> batch) {
    const auto rows = static_cast<Eigen::Index>(batch.size());
    switch (config_.arch) {
      case Arch::Lego: {
        std::vector<nn::Var<S>> pooled;
        for (std::size_t r = 0; r < config_.schema.size(); ++r) {
          nn::Offsets offsets{0};
          for (const auto* o : batch) {
            require(o->graphs.schema == config_.schema, "role graphs built with a different schema");
            offsets.push_back(offsets.back() + static_cast<Eigen::Index>(o->graphs.buckets[r].size()));
          }
          nn::Matrix<S> nodes(offsets.back(), static_cast<Eigen::Index>(graph::kNodeWidth));
          Eigen::Index row = 0;
          for (const auto* o : batch)
            for (const auto& f : o->graphs.buckets[r]) {
              for (std::size_t c = 0; c < graph::kNodeWidth; ++c)
                nodes(row, static_cast<Eigen::Index>(c)) = static_cast<S>(f[c]);
              ++row;
            }
          pooled.push_back(trunk.encoders[r].forward(tape, params_, tape.constant(std::move(nodes)), offsets));
        }
        return nn::concat_cols<S>(pooled);
      }
      case Arch::Mlp:
      case Arch::MlpLocal: {
        const auto width = static_cast<Eigen::Index>(config_.flat_width);
        nn::Matrix<S> x(rows, width);
        for (Eigen::Index b = 0; b < rows; ++b) {
          const auto& f = batch[static_cast<std::size_t>(b)]->features;
          require(f.size() == config_.flat_width, "observation width " + std::to_string(f.size()) +
                                                      " does not match the policy width " +
                                                      std::to_string(config_.flat_width));
          for (Eigen::Index c = 0; c < width; ++c) x(b, c) = static_cast<S>(f[static_cast<std::size_t>(c)]);
        }
        return tape.constant(std::move(x));
      }
      case Arch::Gcn: {
        const auto width = static_cast<Eigen::Index>(gcn_node_width(config_.schema));
        nn::Offsets offsets{0};
        for (const auto* o : batch) offsets.push_back(offsets.back() + static_cast<Eigen::Index>(o->node_count));
        nn::Matrix<S> nodes(offsets.back(), width);
        Eigen::Index row = 0;
        for (const auto* o : batch) {
          require(o->features.size() == o->node_count * static_cast<std::size_t>(width), "gcn feature size mismatch");
          for (std::size_t n = 0; n < o->node_count; ++n, ++row)
            for (Eigen::Index c = 0; c < width; ++c)
              nodes(row, c) = static_cast<S>(o->features[n * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)]);
        }
        auto adjacency = nn::dense_segment_aggregation<S>(offsets);
        auto x = tape.constant(std::move(nodes));
        for (const auto& layer : trunk.gcn) x = layer.forward(tape, params_, x, adjacency);
        return nn::segment_mean(x, offsets);
      }
    }
    throw ContractError("unknown architecture");
  }

  PolicyConfig config_;
  nn::ParameterStore<S> params_;
  Trunk actor_trunk_;
  std::optional<Trunk> critic_trunk_;
  nn::Mlp<S> actor_head_, critic_head_;
  std::size_t log_std_ = 0;
  ValueNormalizer value_norm_;
};

/// Default policy configuration for a scenario role.
inline PolicyConfig default_policy_config(Arch arch, Role role, const sim::ScenarioConfig& scenario,
                                          std::uint64_t seed) {
  PolicyConfig c;
  c.arch = arch;
  c.role = role;
  c.schema = sim::role_schema(scenario.scenario);
  c.flat_width = (arch == Arch::Mlp || arch == Arch::MlpLocal) ? flat_width(scenario) : 0;
  c.seed = seed;
  return c;
}

}  // namespace lego::policy
