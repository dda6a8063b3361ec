#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lego/sim/types.hpp"

namespace lego::eval {

/// Mean and population standard deviation.
struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
};

inline Aggregate aggregate(std::span<const double> xs) {
  Aggregate a;
  if (xs.empty()) return {std::nan(""), std::nan("")};
  for (double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(v / static_cast<double>(xs.size()));
  return a;
}

struct RoleResult {
  Role role = Role::Agent;
  std::vector<double> per_seed;  // mean greedy episode reward per evaluation seed
  Aggregate aggregate;
};

struct Provenance {
  std::string arch;
  std::string trained_on;  // scenario description
  long steps = 0;
};

struct EvalReport {
  std::string scenario;  // ScenarioConfig::describe()
  int agents = 0;
  std::string init;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;  // per seed
  bool compatible = true;
  std::string error;  // set when !compatible
  std::vector<RoleResult> roles;
  Provenance provenance;

  const RoleResult& role(Role r) const {
    for (const auto& x : roles)
      if (x.role == r) return x;
    throw ContractError("report has no result for role " + std::string(role_name(r)));
  }
  /// Aggregate of the first role (the only one in Spread).
  const Aggregate& headline() const {
    require(compatible && !roles.empty(), "report carries no results");
    return roles.front().aggregate;
  }
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["agents"] = r.agents;
  j["init"] = r.init;
  j["seeds"] = r.seeds;
  j["episodes_per_seed"] = r.episodes;
  j["compatible"] = r.compatible;
  if (!r.compatible) j["error"] = r.error;
  j["provenance"] = {{"arch", r.provenance.arch}, {"trained_on", r.provenance.trained_on},
                     {"steps", r.provenance.steps}};
  auto& roles = j["roles"] = nlohmann::json::array();
  for (const auto& x : r.roles)
    roles.push_back({{"role", role_name(x.role)},
                     {"per_seed", x.per_seed},
                     {"mean", x.aggregate.mean},
                     {"std", x.aggregate.stddev}});
  return j;
}

/// Table rows: one per report, one column block per role.
inline std::string to_csv(std::span<const EvalReport> reports, const std::string& label_column = "setting",
                          std::span<const std::string> labels = {}) {
  std::string out = label_column + ",scenario,agents,init,arch,role,mean,std,status\n";
  char buf[64];
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const std::string label = i < labels.size() ? labels[i] : std::to_string(r.agents);
    const std::string head = label + "," + r.scenario + "," + std::to_string(r.agents) + "," + r.init + "," +
                             r.provenance.arch + ",";
    if (!r.compatible) {
      out += head + ",,,incompatible\n";
      continue;
    }
    for (const auto& x : r.roles) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", x.aggregate.mean, x.aggregate.stddev);
      out += head + std::string(role_name(x.role)) + "," + buf + ",ok\n";
    }
  }
  return out;
}

}  // namespace lego::eval
