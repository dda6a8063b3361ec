#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lego/canonical/frame.hpp"
#include "lego/check/gradients.hpp"
#include "lego/check/transforms.hpp"
#include "lego/marl/gae.hpp"
#include "lego/nn/layers.hpp"
#include "lego/policy/role_policy.hpp"
#include "lego/sim/world.hpp"

namespace lego::check {

struct PropertyResult {
  std::string name;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  std::string detail;
  bool passed() const { return max_deviation < tolerance || (tolerance == 0.0 && max_deviation == 0.0); }
};

struct SuiteResult {
  std::string suite;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  std::vector<PropertyResult> properties;
  bool passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.passed(); });
  }
  const PropertyResult& property(const std::string& name) const {
    for (const auto& p : properties)
      if (p.name == name) return p;
    throw ContractError("no property named " + name);
  }
};

inline std::string format_result(const SuiteResult& s) {
  std::string out = "suite " + s.suite + " seed " + std::to_string(s.seed) + "\n";
  char line[256];
  for (const auto& p : s.properties) {
    std::snprintf(line, sizeof line, "  %-34s max_dev %-12.4g tol %-10.3g cases %-8zu %s%s%s\n", p.name.c_str(),
                  p.max_deviation, p.tolerance, p.cases, p.passed() ? "PASS" : "FAIL", p.detail.empty() ? "" : "  ",
                  p.detail.c_str());
    out += line;
  }
  std::snprintf(line, sizeof line, "  %s in %.1fs\n", s.passed() ? "PASS" : "FAIL", s.seconds);
  return out + line;
}

namespace detail {

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::vector<policy::AgentView> role_views(const sim::WorldState& w, Role role) {
  std::vector<policy::AgentView> out;
  const auto schema = sim::role_schema(w.scenario);
  for (auto i : sim::controllable_indices(w))
    if (w.entities[i].role == role) out.push_back(policy::observe(policy::Arch::Lego, w, i, schema));
  return out;
}

template <class S>
std::vector<Vec2> joint_action(policy::RolePolicy<S>& p, const sim::WorldState& w, Role role) {
  const auto views = role_views(w, role);
  std::vector<const policy::AgentView*> ptrs;
  for (const auto& v : views) ptrs.push_back(&v);
  std::vector<Vec2> out;
  for (const auto& s : p.act(ptrs, nullptr, true)) out.push_back(s.global_action);
  return out;
}

inline double canonical_difference(const canonical::CanonicalObservation& a, const canonical::CanonicalObservation& b) {
  if (a.neighbors.size() != b.neighbors.size()) return std::numeric_limits<double>::infinity();
  double d = (a.self_speed - b.self_speed).cwiseAbs().maxCoeff();
  for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
    if (a.neighbors[k].index != b.neighbors[k].index) return std::numeric_limits<double>::infinity();
    d = std::max(d, (a.neighbors[k].position - b.neighbors[k].position).cwiseAbs().maxCoeff());
    d = std::max(d, (a.neighbors[k].velocity - b.neighbors[k].velocity).cwiseAbs().maxCoeff());
  }
  return d;
}

inline canonical::CanonicalObservation canonical_view(const sim::WorldState& w, std::size_t i) {
  const auto frame = canonical::build_frame(w.entities[i], canonical::center_of_mass(w));
  return canonical::canonicalize(w, i, sim::visible_entities(w, i), frame);
}

/// Shuffles entities within each controllable role; returns the world and, per
/// new slot, the old slot its entity came from.
inline std::pair<sim::WorldState, std::vector<std::size_t>> relabel(const sim::WorldState& w, Rng& rng) {
  std::vector<std::size_t> source(w.entities.size());
  for (std::size_t i = 0; i < source.size(); ++i) source[i] = i;
  for (Role role : sim::controllable_roles(w.scenario)) {
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < w.entities.size(); ++i)
      if (w.entities[i].role == role) slots.push_back(i);
    auto shuffled = slots;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t k = 0; k < slots.size(); ++k) source[slots[k]] = shuffled[k];
  }
  auto out = w;
  for (std::size_t i = 0; i < source.size(); ++i) out.entities[i] = w.entities[source[i]];
  return {out, source};
}

inline std::size_t rank_within_role(const sim::WorldState& w, std::size_t slot) {
  std::size_t r = 0;
  for (std::size_t i = 0; i < slot; ++i) r += w.entities[i].role == w.entities[slot].role;
  return r;
}

inline graph::RoleGraphs random_graphs(Rng& rng, const std::vector<Role>& schema) {
  graph::RoleGraphs g;
  g.schema = schema;
  g.buckets.resize(schema.size());
  g.buckets[0].push_back({uniform(rng, 0, 1), 0, 0, 0});
  for (std::size_t r = 1; r < schema.size(); ++r) {
    const int n = 2 + static_cast<int>(uniform(rng, 0, 6));
    for (int k = 0; k < n; ++k)
      g.buckets[r].push_back({uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -1, 1), uniform(rng, -1, 1)});
  }
  return g;
}

template <class S>
nn::Matrix<double> encode_graphs(policy::RolePolicy<S>& p, const graph::RoleGraphs& g) {
  policy::Observation o;
  o.graphs = g;
  const policy::Observation* batch[] = {&o};
  nn::Tape<S> tape(false);
  return p.encode(tape, batch).value().template cast<double>();
}

inline nn::Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  nn::Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

inline nn::Var<double> probe(nn::Tape<double>& tape, nn::Var<double> y, const nn::Matrix<double>& weights) {
  return nn::sum(nn::mul(y, tape.constant(weights)));
}

}  // namespace detail

/// Action equivariance of the deterministic policy, frame invariance of the
/// canonical observation, and permutation properties of the encoder.
inline SuiteResult equivariance_suite(std::uint64_t seed, int states = 100, int transforms = 20) {
  detail::Stopwatch clock;
  SuiteResult out{"equivariance", seed, 0.0, {}};
  PropertyResult f32{"action_equivariance_float32", 0.0, 1e-5, 0, ""};
  PropertyResult f64{"action_equivariance_float64", 0.0, 1e-10, 0, ""};
  PropertyResult canon{"canonical_invariance", 0.0, 1e-6, 0, ""};
  PropertyResult nodes{"within_role_node_permutation", 0.0, 1e-12, 0, ""};
  PropertyResult relabel{"agent_relabel_permutes_actions", 0.0, 1e-12, 0, ""};
  Rng rng = make_rng(derive_seed(seed, 0xE0));

  for (const auto& scenario : {sim::ScenarioConfig::spread(3), sim::ScenarioConfig::tag()}) {
    for (Role role : sim::controllable_roles(scenario.scenario)) {
      auto config = policy::default_policy_config(policy::Arch::Lego, role, scenario,
                                                  derive_seed(seed, static_cast<std::uint64_t>(role)));
      config.actor_output_gain = 1.0;  // O(1) actions so the cap and rotation are exercised
      policy::RolePolicy<float> pf(config);
      policy::RolePolicy<double> pd(config);
      for (int s = 0; s < states; ++s) {
        const auto w = random_world(scenario, rng);
        const auto base_f = detail::joint_action(pf, w, role);
        const auto base_d = detail::joint_action(pd, w, role);
        const auto agents = sim::controllable_indices(w);
        for (int k = 0; k < transforms; ++k) {
          const auto g = random_isometry(rng, k);
          const auto moved = transform(w, g);
          const auto af = detail::joint_action(pf, moved, role);
          const auto ad = detail::joint_action(pd, moved, role);
          for (std::size_t a = 0; a < af.size(); ++a) {
            f32.max_deviation = std::max(f32.max_deviation, (af[a] - g.linear * base_f[a]).cwiseAbs().maxCoeff());
            f64.max_deviation = std::max(f64.max_deviation, (ad[a] - g.linear * base_d[a]).cwiseAbs().maxCoeff());
          }
          f32.cases += af.size();
          f64.cases += ad.size();
          if (role == sim::controllable_roles(scenario.scenario).front()) {
            for (auto i : agents) {
              canon.max_deviation = std::max(
                  canon.max_deviation, detail::canonical_difference(detail::canonical_view(w, i), detail::canonical_view(moved, i)));
              ++canon.cases;
            }
          }
        }
        // Agent relabeling: the joint action follows the agents.
        const auto [relabeled, source] = detail::relabel(w, rng);
        const auto after = detail::joint_action(pd, relabeled, role);
        std::size_t k = 0;
        for (std::size_t slot = 0; slot < relabeled.entities.size(); ++slot) {
          if (relabeled.entities[slot].role != role) continue;
          const auto original = base_d[detail::rank_within_role(w, source[slot])];
          relabel.max_deviation = std::max(relabel.max_deviation, (after[k++] - original).cwiseAbs().maxCoeff());
          ++relabel.cases;
        }
        // Node order inside each role bucket does not change the pooled state.
        const auto graphs = detail::random_graphs(rng, sim::role_schema(scenario.scenario));
        const auto encoded = detail::encode_graphs(pd, graphs);
        auto shuffled = graphs;
        for (auto& b : shuffled.buckets) std::shuffle(b.begin(), b.end(), rng);
        nodes.max_deviation =
            std::max(nodes.max_deviation, (detail::encode_graphs(pd, shuffled) - encoded).cwiseAbs().maxCoeff());
        ++nodes.cases;
      }
    }
  }
  out.properties = {f32, f64, canon, nodes, relabel};
  out.seconds = clock.seconds();
  return out;
}

/// Central finite differences against reverse-mode gradients for every layer type.
inline SuiteResult gradient_suite(std::uint64_t seed) {
  using M = nn::Matrix<double>;
  using detail::probe;
  using detail::random_matrix;
  detail::Stopwatch clock;
  SuiteResult out{"gradients", seed, 0.0, {}};
  Rng rng = make_rng(derive_seed(seed, 0x6A));
  auto record = [&](const std::string& name, const GradientReport& r) {
    out.properties.push_back({name, r.max_relative_error, 1e-4, r.checked, r.worst_parameter});
  };
  auto randomize_biases = [&](nn::ParameterStore<double>& store) {
    store.for_each([&](nn::Parameter<double>& p) {
      if (p.name.ends_with(".b")) p.value = random_matrix(1, p.value.cols(), rng, 0.2);
    });
  };

  {
    nn::ParameterStore<double> store;
    nn::Linear<double> layer(store, "lin", 4, 3, 1.0, rng);
    auto& x = store.add("x", 5, 4);
    x.value = random_matrix(5, 4, rng);
    randomize_biases(store);
    const M w = random_matrix(5, 3, rng);
    record("linear", finite_difference_check(store, [&](nn::Tape<double>& t) {
             return probe(t, layer.forward(t, store, t.param(x)), w);
           }));
  }
  {
    nn::ParameterStore<double> store;
    nn::Mlp<double> mlp(store, "mlp", {6, 8, 8, 2}, rng);
    auto& x = store.add("x", 4, 6);
    x.value = random_matrix(4, 6, rng);
    randomize_biases(store);
    const M w = random_matrix(4, 2, rng);
    record("mlp_tanh", finite_difference_check(store, [&](nn::Tape<double>& t) {
             return probe(t, mlp.forward(t, store, t.param(x)), w);
           }));
  }
  {
    nn::ParameterStore<double> store;
    nn::AttentionLayer<double> layer(store, "attn", {8, 4, 12}, rng);
    store.for_each([&](nn::Parameter<double>& p) { p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.8); });
    auto& x = store.add("x", 7, 8);
    x.value = random_matrix(7, 8, rng);
    const M w = random_matrix(7, 8, rng);
    const nn::Offsets offsets{0, 3, 3, 4, 7};
    record("attention_ffn", finite_difference_check(store, [&](nn::Tape<double>& t) {
             return probe(t, layer.forward(t, store, t.param(x), offsets), w);
           }));
  }
  {
    nn::ParameterStore<double> store;
    nn::GcnLayer<double> layer(store, "gcn", 4, 6, rng);
    randomize_biases(store);
    auto& x = store.add("x", 5, 4);
    x.value = random_matrix(5, 4, rng);
    M adjacency(5, 5);
    adjacency << 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1;
    const auto a = nn::mean_aggregation<double>(adjacency);
    const M w = random_matrix(5, 6, rng);
    record("gcn", finite_difference_check(store, [&](nn::Tape<double>& t) {
             return probe(t, layer.forward(t, store, t.param(x), a), w);
           }));
  }
  {
    nn::ParameterStore<double> store;
    nn::RoleEncoder<double> encoder(store, "enc", 4, {8, 2, 16}, 2, rng);
    randomize_biases(store);
    auto& x = store.add("x", 6, 4);
    x.value = random_matrix(6, 4, rng);
    const nn::Offsets offsets{0, 2, 2, 6};
    const M w = random_matrix(3, 8, rng);
    record("pooled_encoder", finite_difference_check(store, [&](nn::Tape<double>& t) {
             return probe(t, encoder.forward(t, store, t.param(x), offsets), w);
           }));
  }
  {
    auto config = policy::default_policy_config(policy::Arch::Mlp, Role::Agent, sim::ScenarioConfig::spread(1),
                                                derive_seed(seed, 0x6C));
    config.hidden = 2;
    policy::RolePolicy<double> p(config);
    auto& store = p.params();
    store.at("actor.log_std").value = random_matrix(1, 2, rng, 0.5);
    auto& mean = store.add("probe.mean", 4, 2);
    mean.value = random_matrix(4, 2, rng);
    const M actions = random_matrix(4, 2, rng, 1.5);
    record("gaussian_log_prob_entropy", finite_difference_check(store, [&](nn::Tape<double>& t) {
             return nn::add(nn::sum(p.gaussian_log_prob(t, t.param(mean), actions)), nn::scale(p.entropy(t), 0.7));
           }));
  }
  for (policy::Arch arch : {policy::Arch::Lego, policy::Arch::Mlp, policy::Arch::MlpLocal, policy::Arch::Gcn}) {
    const auto scenario = sim::ScenarioConfig::tag();
    auto config = policy::default_policy_config(arch, Role::Pursuer, scenario, derive_seed(seed, 0x6B));
    config.attention = {4, 2, 6};
    config.hidden = 6;
    config.layers = 1;
    config.actor_output_gain = 1.0;
    policy::RolePolicy<double> p(config);
    const auto w = random_world(scenario, rng);
    std::vector<policy::AgentView> views;
    for (auto i : sim::controllable_indices(w))
      if (w.entities[i].role == Role::Pursuer) views.push_back(policy::observe(arch, w, i, sim::role_schema(w.scenario)));
    std::vector<const policy::Observation*> actor, critic;
    M actions(static_cast<Eigen::Index>(views.size()), 2);
    for (std::size_t k = 0; k < views.size(); ++k) {
      actor.push_back(&views[k].actor);
      critic.push_back(&policy::critic_input(views[k]));
      actions.row(static_cast<Eigen::Index>(k)) << uniform(rng, -1, 1), uniform(rng, -1, 1);
    }
    record("policy_end_to_end_" + std::string(policy::arch_name(arch)),
           finite_difference_check(p.params(), [&](nn::Tape<double>& tape) {
             auto e = p.evaluate_actions(tape, actor, critic, actions);
             return nn::add(nn::add(nn::sum(e.log_prob), nn::sum(nn::square(e.value))), nn::scale(e.entropy, 0.3));
           }));
  }
  out.seconds = clock.seconds();
  return out;
}

/// Direct scalar evaluation of the residual multi-head attention update with a
/// ReLU feed-forward block; weights map row vectors x -> x W.
inline std::vector<std::vector<double>> attention_reference(const std::vector<std::vector<double>>& x,
                                                            const nn::Matrix<double>& wq, const nn::Matrix<double>& wk,
                                                            const nn::Matrix<double>& wv, const nn::Matrix<double>& w1,
                                                            const nn::Matrix<double>& b1, const nn::Matrix<double>& w2,
                                                            const nn::Matrix<double>& b2, int heads) {
  const std::size_t n = x.size(), d = x[0].size();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  auto project = [](const nn::Matrix<double>& w, const std::vector<double>& v) {
    std::vector<double> out(static_cast<std::size_t>(w.cols()), 0.0);
    for (std::size_t o = 0; o < out.size(); ++o)
      for (std::size_t i = 0; i < v.size(); ++i) out[o] += w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o)) * v[i];
    return out;
  };
  std::vector<std::vector<double>> q(n), k(n), v(n), out(n);
  for (std::size_t u = 0; u < n; ++u) {
    q[u] = project(wq, x[u]);
    k[u] = project(wk, x[u]);
    v[u] = project(wv, x[u]);
  }
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> mixed(d, 0.0);
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * dh;
      std::vector<double> logits(n);
      for (std::size_t w = 0; w < n; ++w) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[u][off + c] * k[w][off + c];
        logits[w] = dot / std::sqrt(static_cast<double>(dh));
      }
      double z = 0.0;
      for (double l : logits) z += std::exp(l);
      for (std::size_t w = 0; w < n; ++w)
        for (std::size_t c = 0; c < dh; ++c) mixed[off + c] += std::exp(logits[w]) / z * v[w][off + c];
    }
    auto hidden = project(w1, mixed);
    for (std::size_t c = 0; c < hidden.size(); ++c) hidden[c] = std::max(0.0, hidden[c] + b1(0, static_cast<Eigen::Index>(c)));
    auto update = project(w2, hidden);
    out[u].resize(d);
    for (std::size_t c = 0; c < d; ++c) out[u][c] = x[u][c] + update[c] + b2(0, static_cast<Eigen::Index>(c));
  }
  return out;
}

/// attention_layer_forward against the direct reference on hand-set and random weights.
inline SuiteResult attention_suite(std::uint64_t seed) {
  detail::Stopwatch clock;
  SuiteResult out{"attention", seed, 0.0, {}};
  PropertyResult hand{"attention_hand_set_two_nodes", 0.0, 1e-10, 0, ""};
  PropertyResult rand{"attention_random_multi_head", 0.0, 1e-10, 0, ""};
  Rng rng = make_rng(derive_seed(seed, 0xA7));
  auto compare = [](nn::ParameterStore<double>& store, const nn::AttentionLayer<double>& layer, const nn::Matrix<double>& x,
                    PropertyResult& p) {
    auto w = [&](const nn::Linear<double>& l) -> const nn::Matrix<double>& { return store[l.weight_index()].value; };
    auto b = [&](const nn::Linear<double>& l) -> const nn::Matrix<double>& { return store[l.bias_index()].value; };
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      rows[static_cast<std::size_t>(r)].assign(x.row(r).data(), x.row(r).data() + x.cols());
    const auto expected = attention_reference(rows, w(layer.query()), w(layer.key()), w(layer.value()), w(layer.ffn_in()),
                                              b(layer.ffn_in()), w(layer.ffn_out()), b(layer.ffn_out()),
                                              static_cast<int>(layer.sizes().heads));
    nn::Tape<double> tape(false);
    const auto got = nn::attention_layer_forward(tape, store, layer, tape.constant(x)).value();
    for (Eigen::Index u = 0; u < x.rows(); ++u)
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        p.max_deviation = std::max(p.max_deviation,
                                   std::abs(got(u, c) - expected[static_cast<std::size_t>(u)][static_cast<std::size_t>(c)]));
    ++p.cases;
  };
  {
    nn::ParameterStore<double> store;
    nn::AttentionLayer<double> layer(store, "attn", {2, 1, 3}, rng);
    store.at("attn.q.w").value << 0.5, -0.2, 0.1, 0.3;
    store.at("attn.k.w").value << -0.4, 0.6, 0.2, 0.1;
    store.at("attn.v.w").value << 1.0, 0.5, -0.5, 0.25;
    store.at("attn.ffn0.w").value << 0.3, -0.7, 0.2, 0.9, 0.1, -0.4;
    store.at("attn.ffn0.b").value << 0.05, -0.1, 0.2;
    store.at("attn.ffn1.w").value << 0.6, -0.3, 0.2, 0.8, -0.5, 0.4;
    store.at("attn.ffn1.b").value << -0.02, 0.03;
    nn::Matrix<double> x(2, 2);
    x << 0.7, -1.2, 0.4, 0.9;
    compare(store, layer, x, hand);
  }
  for (int trial = 0; trial < 20; ++trial) {
    nn::ParameterStore<double> store;
    const nn::AttentionSizes sizes = trial % 2 ? nn::AttentionSizes{64, 4, 128} : nn::AttentionSizes{8, 4, 12};
    nn::AttentionLayer<double> layer(store, "attn", sizes, rng);
    const double scale = sizes.width == 64 ? 0.2 : 0.8;
    store.for_each([&](nn::Parameter<double>& p) {
      p.value = detail::random_matrix(p.value.rows(), p.value.cols(), rng, scale);
    });
    const auto n = static_cast<Eigen::Index>(1 + trial % 7);
    compare(store, layer, detail::random_matrix(n, sizes.width, rng), rand);
  }
  out.properties = {hand, rand};
  out.seconds = clock.seconds();
  return out;
}

/// With lambda = 1 the advantages equal brute-force discounted returns minus values.
inline SuiteResult gae_suite(std::uint64_t seed, int sequences = 100) {
  detail::Stopwatch clock;
  SuiteResult out{"gae", seed, 0.0, {}};
  PropertyResult p{"gae_lambda1_matches_discounted_returns", 0.0, 1e-10, 0, ""};
  PropertyResult ret{"gae_returns_equal_advantage_plus_value", 0.0, 1e-10, 0, ""};
  Rng rng = make_rng(derive_seed(seed, 0x6AE));
  for (int s = 0; s < sequences; ++s) {
    const std::size_t n = 1 + static_cast<std::size_t>(uniform(rng, 0, 60));
    const double gamma = uniform(rng, 0.5, 0.999);
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> done(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = uniform(rng, -2, 2);
      v[t] = uniform(rng, -3, 3);
      done[t] = uniform(rng, 0, 1) < 0.1;
    }
    const double bootstrap = uniform(rng, -3, 3);
    const auto g = marl::compute_gae(r, v, done, bootstrap, gamma, 1.0);
    for (std::size_t t = 0; t < n; ++t) {
      double total = 0.0, discount = 1.0;
      std::size_t k = t;
      for (; k < n; ++k) {
        total += discount * r[k];
        discount *= gamma;
        if (done[k]) break;
      }
      if (k == n) total += discount * bootstrap;
      p.max_deviation = std::max(p.max_deviation, std::abs(g.advantages[t] - (total - v[t])));
      ret.max_deviation = std::max(ret.max_deviation, std::abs(g.returns[t] - (g.advantages[t] + v[t])));
      ++p.cases;
      ++ret.cases;
    }
  }
  out.properties = {p, ret};
  out.seconds = clock.seconds();
  return out;
}

/// Whether any dense sample of the segment falls strictly inside an obstacle.
inline bool dense_line_blocked(const sim::WorldState& w, const Vec2& from, const Vec2& to, double spacing) {
  const double length = (to - from).norm();
  if (length == 0.0) return false;
  const auto samples = static_cast<std::size_t>(std::ceil(length / spacing));
  for (const auto& o : w.entities) {
    if (o.role != Role::Obstacle) continue;
    const double r2 = o.radius * o.radius;
    for (std::size_t s = 0; s <= samples; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(samples);
      if ((from + t * (to - from) - o.position).squaredNorm() < r2) return true;
    }
  }
  return false;
}

/// Free decay, contact antisymmetry and visibility against dense line sampling.
inline SuiteResult physics_suite(std::uint64_t seed, int visibility_configs = 1000, double spacing = 1e-4) {
  detail::Stopwatch clock;
  SuiteResult out{"physics", seed, 0.0, {}};
  Rng rng = make_rng(derive_seed(seed, 0x9A));

  PropertyResult decay{"free_decay_velocity_exact", 0.0, 0.0, 0, ""};
  PropertyResult decay_norm{"free_decay_speed_relative", 0.0, 1e-15, 0, ""};
  for (int trial = 0; trial < 200; ++trial) {
    auto w = random_world(sim::ScenarioConfig::spread(1 + trial % 4), rng);
    const std::vector<Vec2> zero(sim::controllable_indices(w).size(), Vec2::Zero());
    for (int t = 0; t < 10; ++t) {
      const auto contacts = sim::contact_forces(w);
      const bool free = std::all_of(contacts.begin(), contacts.end(), [](const Vec2& f) { return f == Vec2::Zero(); });
      const auto next = sim::integrate(w, zero);
      if (free) {
        const double keep = 1.0 - w.physics.damping;
        for (auto i : sim::controllable_indices(w)) {
          const Vec2& v0 = w.entities[i].velocity;
          const Vec2& v1 = next.entities[i].velocity;
          // Compared by equality: a fused multiply-subtract would expose the product's rounding.
          const Vec2 expected = v0 * keep;
          if (v1 != expected)
            decay.max_deviation = std::max(decay.max_deviation, (v1 - expected).cwiseAbs().maxCoeff());
          if (v0.norm() > 0.0)
            decay_norm.max_deviation =
                std::max(decay_norm.max_deviation, std::abs(v1.norm() - keep * v0.norm()) / v0.norm());
          ++decay.cases;
          ++decay_norm.cases;
        }
      }
      w = next;
    }
  }

  PropertyResult antisym{"contact_force_antisymmetry", 0.0, 0.0, 0, ""};
  PropertyResult momentum{"contact_momentum_conserved", 0.0, 1e-12, 0, ""};
  const sim::Physics physics{};
  for (int trial = 0; trial < 5000; ++trial) {
    auto a = sim::detail::make_agent(trial % 2 ? Role::Pursuer : Role::Agent);
    auto b = sim::detail::make_agent(trial % 3 ? Role::Evader : Role::Agent);
    a.position = Vec2(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2));
    b.position = Vec2(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2));
    const Vec2 f = sim::contact_force(a, b, physics) + sim::contact_force(b, a, physics);
    antisym.max_deviation = std::max(antisym.max_deviation, f.cwiseAbs().maxCoeff());
    ++antisym.cases;
  }
  for (int trial = 0; trial < 200; ++trial) {
    auto config = sim::ScenarioConfig::spread(6);
    config.bounds = 0.4;
    const auto w = random_world(config, rng);
    Vec2 total = Vec2::Zero();
    double scale = 0.0;
    for (const auto& f : sim::contact_forces(w)) {
      total += f;
      scale = std::max(scale, f.cwiseAbs().maxCoeff());
    }
    momentum.max_deviation = std::max(momentum.max_deviation, total.cwiseAbs().maxCoeff() / std::max(scale, 1.0));
    ++momentum.cases;
  }

  PropertyResult vis{"visibility_vs_dense_sampling", 0.0, 0.0, 0, ""};
  std::size_t disagreements = 0, blocked = 0;
  for (int c = 0; c < visibility_configs; ++c) {
    auto config = sim::ScenarioConfig::tag();
    config.obstacles = 2 + c % 4;
    const auto w = random_world(config, rng);
    for (auto i : sim::controllable_indices(w)) {
      const auto seen = sim::visible_entities(w, i);
      for (std::size_t j = 0; j < w.entities.size(); ++j) {
        if (j == i || w.entities[j].role == Role::Obstacle) continue;
        const bool analytic = std::find(seen.begin(), seen.end(), j) == seen.end();
        const bool dense = dense_line_blocked(w, w.entities[i].position, w.entities[j].position, spacing);
        disagreements += analytic != dense;
        blocked += dense;
        ++vis.cases;
      }
    }
  }
  vis.max_deviation = static_cast<double>(disagreements);
  vis.detail = std::to_string(disagreements) + " disagreements over " + std::to_string(visibility_configs) +
               " configs, " + std::to_string(blocked) + " occluded pairs";

  out.properties = {decay, decay_norm, antisym, momentum, vis};
  out.seconds = clock.seconds();
  return out;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"equivariance", "gradients", "attention", "gae", "physics"};
  return names;
}

inline SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "equivariance") return equivariance_suite(seed);
  if (name == "gradients") return gradient_suite(seed);
  if (name == "attention") return attention_suite(seed);
  if (name == "gae") return gae_suite(seed);
  if (name == "physics") return physics_suite(seed);
  throw ConfigError("unknown check suite '" + name + "'");
}

}  // namespace lego::check
