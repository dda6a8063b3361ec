#pragma once

#include <filesystem>
#include <fstream>

#include "lego/io/checkpoint.hpp"
#include "lego/sim/visibility.hpp"
#include "lego/sim/world.hpp"

namespace lego::io {

/// One step of an exported episode: the state at time t, the actions applied
/// and the rewards they earned.
struct TrajectoryStep {
  int t = 0;
  std::vector<Vec2> positions;   // per entity
  std::vector<Vec2> velocities;  // per entity
  std::vector<Vec2> actions;     // per controllable agent, global frame
  std::vector<double> rewards;   // per controllable agent
  std::vector<std::vector<std::size_t>> visible;  // per controllable agent
};

struct Trajectory {
  sim::ScenarioConfig scenario;
  std::uint64_t episode_seed = 0;
  nlohmann::json info;  // free-form provenance (policy, protocol)
  std::vector<TrajectoryStep> steps;
  std::vector<Vec2> final_positions;
  std::vector<Vec2> final_velocities;
};

namespace detail {

inline nlohmann::json vecs_json(const std::vector<Vec2>& v) {
  auto a = nlohmann::json::array();
  for (const auto& x : v) a.push_back({x.x(), x.y()});
  return a;
}

inline std::vector<Vec2> vecs_from(const nlohmann::json& j) {
  std::vector<Vec2> out;
  for (const auto& x : j) out.emplace_back(x.at(0).get<double>(), x.at(1).get<double>());
  return out;
}

inline void snapshot(const sim::WorldState& w, std::vector<Vec2>& p, std::vector<Vec2>& v) {
  p.clear();
  v.clear();
  for (const auto& e : w.entities) {
    p.push_back(e.position);
    v.push_back(e.velocity);
  }
}

}  // namespace detail

/// Appends one transition; `before` must be the state the actions were applied to.
inline void record_step(Trajectory& tr, const sim::WorldState& before, std::span<const Vec2> actions,
                        const sim::StepResult& result) {
  TrajectoryStep s;
  s.t = before.time_step;
  detail::snapshot(before, s.positions, s.velocities);
  s.actions.assign(actions.begin(), actions.end());
  s.rewards = result.rewards;
  for (auto i : sim::controllable_indices(before)) s.visible.push_back(sim::visible_entities(before, i));
  tr.steps.push_back(std::move(s));
  detail::snapshot(result.state, tr.final_positions, tr.final_velocities);
}

/// JSON lines: a header record, one record per step, a final-state record.
inline std::string to_jsonl(const Trajectory& tr) {
  std::string out;
  nlohmann::json header{{"type", "header"},
                        {"scenario", scenario_to_json(tr.scenario)},
                        {"episode_seed", tr.episode_seed},
                        {"steps", tr.steps.size()},
                        {"info", tr.info}};
  out += header.dump() + "\n";
  for (const auto& s : tr.steps) {
    nlohmann::json j{{"type", "step"},
                     {"t", s.t},
                     {"positions", detail::vecs_json(s.positions)},
                     {"velocities", detail::vecs_json(s.velocities)},
                     {"actions", detail::vecs_json(s.actions)},
                     {"rewards", s.rewards},
                     {"visible", s.visible}};
    out += j.dump() + "\n";
  }
  nlohmann::json fin{{"type", "final"},
                     {"positions", detail::vecs_json(tr.final_positions)},
                     {"velocities", detail::vecs_json(tr.final_velocities)}};
  out += fin.dump() + "\n";
  return out;
}

inline Trajectory parse_trajectory(const std::string& text) {
  Trajectory tr;
  std::istringstream in(text);
  std::string line;
  bool header = false, final = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        tr.scenario = scenario_from_json(j.at("scenario"));
        tr.episode_seed = j.at("episode_seed").get<std::uint64_t>();
        tr.info = j.value("info", nlohmann::json::object());
        header = true;
      } else if (type == "step") {
        TrajectoryStep s;
        s.t = j.at("t").get<int>();
        s.positions = detail::vecs_from(j.at("positions"));
        s.velocities = detail::vecs_from(j.at("velocities"));
        s.actions = detail::vecs_from(j.at("actions"));
        s.rewards = j.at("rewards").get<std::vector<double>>();
        s.visible = j.at("visible").get<std::vector<std::vector<std::size_t>>>();
        tr.steps.push_back(std::move(s));
      } else if (type == "final") {
        tr.final_positions = detail::vecs_from(j.at("positions"));
        tr.final_velocities = detail::vecs_from(j.at("velocities"));
        final = true;
      } else {
        throw IoError("unknown trajectory record type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed trajectory: ") + e.what());
  }
  if (!header || !final) throw IoError("trajectory lacks a header or final record");
  return tr;
}

inline void save_trajectory(const std::filesystem::path& path, const Trajectory& tr) {
  write_text_atomic(path, to_jsonl(tr));
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_trajectory(std::string(bytes.begin(), bytes.end()));
}

struct ReplayResult {
  bool identical = true;
  int steps = 0;
  std::string mismatch;  // first difference, empty when identical
};

/// Re-simulates from the scenario and episode seed with the stored actions and
/// compares every recorded quantity bit for bit.
inline ReplayResult replay(const Trajectory& tr) {
  ReplayResult r;
  auto fail = [&](const std::string& what) {
    r.identical = false;
    r.mismatch = what;
    return r;
  };
  auto same_state = [](const sim::WorldState& w, const std::vector<Vec2>& p, const std::vector<Vec2>& v) {
    if (p.size() != w.entities.size() || v.size() != w.entities.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (w.entities[i].position != p[i] || w.entities[i].velocity != v[i]) return false;
    return true;
  };
  auto w = sim::reset(tr.scenario, tr.episode_seed);
  for (const auto& s : tr.steps) {
    const std::string at = "step " + std::to_string(s.t);
    if (s.t != w.time_step) return fail(at + ": time index " + std::to_string(w.time_step) + " expected");
    if (!same_state(w, s.positions, s.velocities)) return fail(at + ": state differs");
    const auto agents = sim::controllable_indices(w);
    if (s.visible.size() != agents.size()) return fail(at + ": visibility record size");
    for (std::size_t k = 0; k < agents.size(); ++k)
      if (sim::visible_entities(w, agents[k]) != s.visible[k]) return fail(at + ": visibility differs");
    sim::StepResult next;
    try {
      next = sim::step(w, s.actions);
    } catch (const ContractError& e) {
      return fail(at + ": " + e.what());
    }
    if (next.rewards != s.rewards) return fail(at + ": rewards differ");
    w = std::move(next.state);
    ++r.steps;
  }
  if (!same_state(w, tr.final_positions, tr.final_velocities)) return fail("final state differs");
  return r;
}

}  // namespace lego::io
