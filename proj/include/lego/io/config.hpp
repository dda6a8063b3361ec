#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "lego/eval/protocols.hpp"

namespace lego::io {

/// Everything a run needs, resolved from a flat `key = value` file plus overrides.
struct RunConfig {
  sim::ScenarioConfig scenario = sim::ScenarioConfig::spread(3);
  marl::TrainConfig train;
  std::string arch = "lego";
  std::string pursuer;  // per-team override in Tag: an architecture or pursue/flee/random
  std::string evader;
  eval::EvalOptions eval;
  int checkpoint_interval = 50;  // updates between intermediate checkpoints; 0 = final only
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x))
    throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + v + "'");
}

/// Shortest text that parses back to the same double.
inline std::string fmt(double x) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LEGO_INT_FIELD(key, member, T) \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_integer<T>(key, v); }, \
         [](const RunConfig& c) { return std::to_string(c.member); }}}
#define LEGO_DOUBLE_FIELD(key, member) \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_double(key, v); }, \
         [](const RunConfig& c) { return fmt(c.member); }}}
#define LEGO_BOOL_FIELD(key, member) \
  {key, {[](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); }, \
         [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}

// Applied in this order, so scenario.name (which resets counts) goes first.
inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"scenario.name",
       {[](RunConfig& c, const std::string& v) {
          const auto s = sim::scenario_from_name(v);
          c.scenario = s == sim::Scenario::Spread ? sim::ScenarioConfig::spread(3) : sim::ScenarioConfig::tag();
        },
        [](const RunConfig& c) { return std::string(sim::scenario_name(c.scenario.scenario)); }}},
      {"scenario.agents",
       {[](RunConfig& c, const std::string& v) {
          c.scenario.agents = parse_integer<int>("scenario.agents", v);
          c.scenario.landmarks = c.scenario.agents;
        },
        [](const RunConfig& c) { return std::to_string(c.scenario.agents); }}},
      LEGO_INT_FIELD("scenario.landmarks", scenario.landmarks, int),
      LEGO_INT_FIELD("scenario.pursuers", scenario.pursuers, int),
      LEGO_INT_FIELD("scenario.evaders", scenario.evaders, int),
      LEGO_INT_FIELD("scenario.obstacles", scenario.obstacles, int),
      LEGO_INT_FIELD("scenario.horizon", scenario.horizon, int),
      LEGO_DOUBLE_FIELD("scenario.bounds", scenario.bounds),
      {"scenario.init",
       {[](RunConfig& c, const std::string& v) { c.scenario.init = sim::init_from_name(v); },
        [](const RunConfig& c) { return std::string(sim::init_name(c.scenario.init)); }}},
      LEGO_DOUBLE_FIELD("scenario.dt", scenario.physics.dt),
      LEGO_DOUBLE_FIELD("scenario.damping", scenario.physics.damping),
      LEGO_DOUBLE_FIELD("scenario.mass", scenario.physics.mass),
      LEGO_DOUBLE_FIELD("scenario.contact_stiffness", scenario.physics.contact_stiffness),
      LEGO_DOUBLE_FIELD("scenario.contact_margin", scenario.physics.contact_margin),
      LEGO_INT_FIELD("train.total_steps", train.total_steps, long),
      LEGO_INT_FIELD("train.envs", train.envs, int),
      LEGO_INT_FIELD("train.rollout_length", train.rollout_length, int),
      LEGO_INT_FIELD("train.ppo_epochs", train.ppo_epochs, int),
      LEGO_INT_FIELD("train.minibatches", train.minibatches, int),
      LEGO_DOUBLE_FIELD("train.clip", train.clip),
      LEGO_DOUBLE_FIELD("train.learning_rate", train.learning_rate),
      LEGO_BOOL_FIELD("train.lr_decay", train.lr_decay),
      LEGO_DOUBLE_FIELD("train.entropy_coef", train.entropy_coef),
      LEGO_DOUBLE_FIELD("train.value_coef", train.value_coef),
      LEGO_BOOL_FIELD("train.value_clip", train.value_clip),
      LEGO_DOUBLE_FIELD("train.max_grad_norm", train.max_grad_norm),
      LEGO_DOUBLE_FIELD("train.gamma", train.gamma),
      LEGO_DOUBLE_FIELD("train.lambda", train.lambda),
      LEGO_INT_FIELD("train.eval_interval", train.eval_interval, int),
      LEGO_INT_FIELD("train.eval_episodes", train.eval_episodes, int),
      LEGO_INT_FIELD("train.seed", train.seed, std::uint64_t),
      LEGO_INT_FIELD("train.checkpoint_interval", checkpoint_interval, int),
      {"arch.name",
       {[](RunConfig& c, const std::string& v) {
          policy::arch_from_name(v);
          c.arch = v;
        },
        [](const RunConfig& c) { return c.arch; }}},
      {"arch.pursuer", {[](RunConfig& c, const std::string& v) { c.pursuer = v; }, [](const RunConfig& c) { return c.pursuer; }}},
      {"arch.evader", {[](RunConfig& c, const std::string& v) { c.evader = v; }, [](const RunConfig& c) { return c.evader; }}},
      LEGO_INT_FIELD("eval.episodes", eval.episodes, int),
      {"eval.seeds",
       {[](RunConfig& c, const std::string& v) {
          c.eval.seeds.clear();
          std::stringstream ss(v);
          for (std::string item; std::getline(ss, item, ',');)
            c.eval.seeds.push_back(parse_integer<std::uint64_t>("eval.seeds", trim(item)));
          if (c.eval.seeds.empty()) throw ConfigError("'eval.seeds' must list at least one seed");
        },
        [](const RunConfig& c) {
          std::string s;
          for (auto x : c.eval.seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
          return s;
        }}},
  };
  return table;
}

#undef LEGO_INT_FIELD
#undef LEGO_DOUBLE_FIELD
#undef LEGO_BOOL_FIELD

}  // namespace detail

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment. Duplicates and lines
/// without '=' are errors. Keys are not checked here.
inline KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
    const auto key = detail::trim(std::string_view(body).substr(0, eq));
    const auto value = detail::trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

/// Builds a validated RunConfig. `overrides` win over `file`; a scenario name
/// must come from one of them.
inline RunConfig resolve_config(const KeyValues& file, const KeyValues& overrides = {}) {
  KeyValues kv = file;
  for (const auto& [k, v] : overrides) kv[k] = v;
  std::vector<std::string> unknown;
  for (const auto& [k, v] : kv) {
    bool known = false;
    for (const auto& f : detail::fields()) known = known || f.first == k;
    if (!known) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown configuration key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  if (!kv.contains("scenario.name")) throw ConfigError("missing required key 'scenario.name'");
  RunConfig c;
  for (const auto& [key, field] : detail::fields())
    if (auto it = kv.find(key); it != kv.end()) field.set(c, it->second);
  c.scenario.validate();
  c.train.validate();
  if (c.eval.episodes <= 0) throw ConfigError("'eval.episodes' must be positive");
  if (c.checkpoint_interval < 0) throw ConfigError("'train.checkpoint_interval' must be non-negative");
  for (const auto* team : {&c.pursuer, &c.evader})
    if (!team->empty() && c.scenario.scenario != sim::Scenario::TagOcclusion)
      throw ConfigError("arch.pursuer / arch.evader apply to the tag scenario only");
  return c;
}

inline RunConfig load_config(const std::string& path, const KeyValues& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_config(parse_key_values(ss.str()), overrides);
}

/// Fully resolved configuration in the input format; parses back to the same config.
inline std::string to_text(const RunConfig& c) {
  std::string out;
  for (const auto& [key, field] : detail::fields()) {
    const auto v = field.get(c);
    if (v.empty()) continue;
    out += key + " = " + v + "\n";
  }
  return out;
}

/// Per-role specification: an architecture name, or pursue/flee/random for a scripted team.
inline marl::RoleSpec role_spec(Role role, const std::string& choice) {
  if (choice == "pursue") return {role, policy::Arch::Lego, marl::Control::Pursue};
  if (choice == "flee") return {role, policy::Arch::Lego, marl::Control::Flee};
  if (choice == "random") return {role, policy::Arch::Lego, marl::Control::Random};
  return {role, policy::arch_from_name(choice), marl::Control::Learn};
}

inline std::vector<marl::RoleSpec> role_specs(const RunConfig& c) {
  std::vector<marl::RoleSpec> out;
  for (Role r : sim::controllable_roles(c.scenario.scenario)) {
    std::string choice = c.arch;
    if (r == Role::Pursuer && !c.pursuer.empty()) choice = c.pursuer;
    if (r == Role::Evader && !c.evader.empty()) choice = c.evader;
    out.push_back(role_spec(r, choice));
  }
  return out;
}

inline nlohmann::json scenario_to_json(const sim::ScenarioConfig& s) {
  return {{"name", sim::scenario_name(s.scenario)},
          {"agents", s.agents},
          {"landmarks", s.landmarks},
          {"pursuers", s.pursuers},
          {"evaders", s.evaders},
          {"obstacles", s.obstacles},
          {"horizon", s.horizon},
          {"bounds", s.bounds},
          {"init", sim::init_name(s.init)},
          {"dt", s.physics.dt},
          {"damping", s.physics.damping},
          {"mass", s.physics.mass},
          {"contact_stiffness", s.physics.contact_stiffness},
          {"contact_margin", s.physics.contact_margin},
          {"activation_margins", s.physics.activation_margins}};
}

inline sim::ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  try {
    sim::ScenarioConfig s;
    s.scenario = sim::scenario_from_name(j.at("name").get<std::string>());
    s.agents = j.at("agents").get<int>();
    s.landmarks = j.at("landmarks").get<int>();
    s.pursuers = j.at("pursuers").get<int>();
    s.evaders = j.at("evaders").get<int>();
    s.obstacles = j.at("obstacles").get<int>();
    s.horizon = j.at("horizon").get<int>();
    s.bounds = j.at("bounds").get<double>();
    s.init = sim::init_from_name(j.at("init").get<std::string>());
    s.physics.dt = j.at("dt").get<double>();
    s.physics.damping = j.at("damping").get<double>();
    s.physics.mass = j.at("mass").get<double>();
    s.physics.contact_stiffness = j.at("contact_stiffness").get<double>();
    s.physics.contact_margin = j.at("contact_margin").get<double>();
    s.physics.activation_margins = j.at("activation_margins").get<double>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed scenario record: ") + e.what());
  }
}

}  // namespace lego::io
