#pragma once

#include <algorithm>
#include <numeric>
#include <sstream>

#include "lego/marl/config.hpp"
#include "lego/marl/rollout.hpp"
#include "lego/nn/adam.hpp"

namespace lego::marl {

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
};

namespace detail {

template <class S>
nn::Matrix<S> column(std::span<const double> xs, std::span<const std::size_t> idx) {
  nn::Matrix<S> m(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<S>(xs[idx[i]]);
  return m;
}

template <class S>
nn::Var<S> maximum(nn::Var<S> a, nn::Var<S> b) {
  return nn::scale(nn::minimum(nn::scale(a, S(-1)), nn::scale(b, S(-1))), S(-1));
}

}  // namespace detail

/// Clipped-surrogate PPO over one role batch with computed advantages.
/// Advantages are normalised over the whole batch; the role's value
/// normaliser absorbs the new returns before the critic regresses on them.
template <class S>
UpdateStats ppo_update(policy::RolePolicy<S>& pol, nn::Adam<S>& optimizer, const RoleBatch<S>& batch,
                       const TrainConfig& cfg, double learning_rate, Rng& rng) {
  const std::size_t n = batch.size();
  require(n > 0 && batch.advantages.size() == n && batch.returns.size() == n, "ppo_update: advantages missing");
  std::vector<double> adv = batch.advantages;
  normalize_advantages(adv);
  auto& vn = pol.value_normalizer();
  vn.update(batch.returns);
  std::vector<double> target(n), old_value(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = vn.normalize(batch.returns[i]);
    old_value[i] = vn.normalize(batch.values[i]);
  }

  const auto M = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatches), n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  UpdateStats stats;
  const S eps = static_cast<S>(cfg.clip);
  std::vector<const policy::Observation*> actor, critic;
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t lo = m * n / M, hi = (m + 1) * n / M;
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      actor.clear();
      critic.clear();
      bool any_critic = false;
      for (auto i : idx) any_critic = any_critic || !batch.views[i].critic_is_actor;
      nn::Matrix<S> actions(static_cast<Eigen::Index>(idx.size()), 2);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto& v = batch.views[idx[j]];
        actor.push_back(&v.actor);
        if (any_critic) critic.push_back(&policy::critic_input(v));
        actions(static_cast<Eigen::Index>(j), 0) = static_cast<S>(batch.raw_actions[idx[j]].x());
        actions(static_cast<Eigen::Index>(j), 1) = static_cast<S>(batch.raw_actions[idx[j]].y());
      }

      nn::Tape<S> tape;
      auto ev = pol.evaluate_actions(tape, actor, critic, actions);
      auto old_lp = tape.constant(detail::column<S>(batch.log_probs, idx));
      auto a = tape.constant(detail::column<S>(adv, idx));
      auto ratio = nn::exp(nn::sub(ev.log_prob, old_lp));
      auto surrogate = nn::minimum(nn::mul(ratio, a), nn::mul(nn::clamp(ratio, S(1) - eps, S(1) + eps), a));
      auto policy_loss = nn::scale(nn::mean(surrogate), S(-1));
      auto t = tape.constant(detail::column<S>(target, idx));
      auto value_err = nn::square(nn::sub(ev.value, t));
      if (cfg.value_clip) {
        auto old = tape.constant(detail::column<S>(old_value, idx));
        auto clipped = nn::add(old, nn::clamp(nn::sub(ev.value, old), -eps, eps));
        value_err = detail::maximum(value_err, nn::square(nn::sub(clipped, t)));
      }
      auto value_loss = nn::scale(nn::mean(value_err), S(0.5));
      auto loss = nn::sub(nn::add(policy_loss, nn::scale(value_loss, static_cast<S>(cfg.value_coef))),
                          nn::scale(ev.entropy, static_cast<S>(cfg.entropy_coef)));

      const double lv = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(lv)) {
        std::ostringstream msg;
        msg << "non-finite PPO loss for role " << role_name(batch.role) << " (epoch " << epoch << ", minibatch " << m
            << "): policy " << policy_loss.value()(0, 0) << ", value " << value_loss.value()(0, 0) << ", entropy "
            << ev.entropy.value()(0, 0);
        throw NumericalError(msg.str());
      }
      pol.params().zero_grad();
      tape.backward(loss);
      stats.grad_norm += nn::clip_gradient_norm(pol.params(), cfg.max_grad_norm);
      optimizer.step(pol.params(), learning_rate);

      stats.policy_loss += static_cast<double>(policy_loss.value()(0, 0));
      stats.value_loss += static_cast<double>(value_loss.value()(0, 0));
      stats.entropy += static_cast<double>(ev.entropy.value()(0, 0));
      double kl = 0.0, clipped = 0.0;
      for (Eigen::Index j = 0; j < ratio.rows(); ++j) {
        const double r = static_cast<double>(ratio.value()(j, 0));
        kl += static_cast<double>(old_lp.value()(j, 0) - ev.log_prob.value()(j, 0));
        clipped += std::abs(r - 1.0) > cfg.clip ? 1.0 : 0.0;
      }
      stats.approx_kl += kl / static_cast<double>(ratio.rows());
      stats.clip_fraction += clipped / static_cast<double>(ratio.rows());
      ++stats.minibatches;
    }
  }
  const double k = stats.minibatches;
  for (double* f : {&stats.policy_loss, &stats.value_loss, &stats.entropy, &stats.approx_kl, &stats.clip_fraction,
                    &stats.grad_norm})
    *f /= k;
  return stats;
}

}  // namespace lego::marl
