#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "lego/check/suites.hpp"
#include "lego/io.hpp"

namespace {

using namespace lego;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kProperty = 3, kIo = 4, kNumerical = 5 };

fs::path output_root() {
  const char* root = std::getenv("LEGO_OUTPUT_ROOT");
  return root && *root ? fs::path(root) : fs::current_path();
}

/// An output directory owned by this process for its lifetime; a second run
/// pointed at the same directory fails instead of interleaving files.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    std::FILE* f = std::fopen(lock().c_str(), "wx");
    if (!f) throw IoError("output directory '" + dir_.string() + "' is locked by another run (" + lock().string() + ")");
    std::fprintf(f, "locked\n");
    std::fclose(f);
  }
  ~OutputDir() {
    std::error_code ec;
    fs::remove(lock(), ec);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  const fs::path& path() const { return dir_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

 private:
  fs::path lock() const { return dir_ / ".lock"; }
  fs::path dir_;
};

template <class T>
std::vector<T> parse_list(const std::string& text, T min, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto t = io::detail::trim(item);
    if (t.empty()) continue;
    T v{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || v < min) throw ConfigError("invalid " + what + " '" + t + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("expected at least one " + what);
  return out;
}

std::vector<int> parse_int_list(const std::string& text) { return parse_list<int>(text, 1, "team size"); }

io::KeyValues parse_sets(const std::vector<std::string>& sets) {
  io::KeyValues kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[io::detail::trim(std::string_view(s).substr(0, eq))] = io::detail::trim(std::string_view(s).substr(eq + 1));
  }
  return kv;
}

std::string team_arch_label(const marl::Team<float>& team) {
  std::string out;
  for (const auto& s : team.slots) {
    if (!out.empty()) out += "/";
    out += s.policy ? std::string(policy::arch_name(s.policy->arch())) : std::string(marl::control_name(s.control));
  }
  return out;
}

void print_report(const eval::EvalReport& r) {
  if (!r.compatible) {
    std::printf("%-28s incompatible: %s\n", r.scenario.c_str(), r.error.c_str());
    return;
  }
  for (const auto& role : r.roles)
    std::printf("%-28s %-8s %10.4f +- %.4f\n", r.scenario.c_str(), std::string(role_name(role.role)).c_str(),
                role.aggregate.mean, role.aggregate.stddev);
}

void write_reports(const OutputDir& out, const std::vector<eval::EvalReport>& reports, const std::string& label_column,
                   const std::vector<std::string>& labels) {
  auto j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(eval::to_json(r));
  io::write_text_atomic(out / "report.json", j.dump(2) + "\n");
  io::write_text_atomic(out / "report.csv", eval::to_csv(reports, label_column, labels));
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, arch, scenario, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> agents;
  std::optional<long> steps;
  std::vector<std::string> sets;
};

io::RunConfig resolve_train_config(const TrainArgs& a) {
  auto overrides = parse_sets(a.sets);
  if (a.seed) overrides["train.seed"] = std::to_string(*a.seed);
  if (!a.arch.empty()) overrides["arch.name"] = a.arch;
  if (!a.scenario.empty()) overrides["scenario.name"] = a.scenario;
  if (a.agents) overrides["scenario.agents"] = std::to_string(*a.agents);
  if (a.steps) overrides["train.total_steps"] = std::to_string(*a.steps);
  return a.config.empty() ? io::resolve_config({}, overrides) : io::load_config(a.config, overrides);
}

int run_train(const TrainArgs& a) {
  const auto cfg = resolve_train_config(a);
  const auto specs = io::role_specs(cfg);
  auto team = marl::make_team<float>(cfg.scenario, specs, derive_seed(cfg.train.seed, 0));
  marl::Trainer<float> trainer(cfg.train, cfg.scenario, std::move(team));

  const std::string name = a.out.empty() ? "train-" + cfg.scenario.describe() + "-" + cfg.arch + "-s" +
                                               std::to_string(cfg.train.seed)
                                         : a.out;
  OutputDir out(output_root() / name);
  io::write_text_atomic(out / "config.txt", io::to_text(cfg));
  fs::create_directories(out / "checkpoints");

  auto save = [&](const std::string& file) {
    io::save_checkpoint(out / file, trainer.team(), cfg.scenario, trainer.steps());
    std::ostringstream csv;
    marl::write_metrics(csv, trainer.metrics());
    io::write_text_atomic(out / "metrics.csv", csv.str());
  };
  int updates = 0;
  while (!trainer.finished()) {
    for (const auto& row : trainer.update())
      if (row.eval_reward)
        std::printf("step %ld %s train %.4f eval %.4f\n", row.step, std::string(role_name(row.role)).c_str(),
                    row.mean_episode_reward, *row.eval_reward);
    ++updates;
    if (cfg.checkpoint_interval > 0 && updates % cfg.checkpoint_interval == 0 && !trainer.finished()) {
      char file[64];
      std::snprintf(file, sizeof file, "checkpoints/update_%06d.ckpt", updates);
      save(file);
    }
  }
  save("checkpoint.ckpt");

  auto final_team = trainer.team();
  const auto report = eval::evaluate(final_team, cfg.scenario, cfg.eval,
                                     {team_arch_label(final_team), cfg.scenario.describe(), trainer.steps()});
  io::write_text_atomic(out / "summary.json", eval::to_json(report).dump(2) + "\n");
  std::printf("trained %ld steps (%d updates) -> %s\n", trainer.steps(), updates, out.path().c_str());
  print_report(report);
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint, protocol = "basic", targets, arch, out, config, opponent, inits;
  std::optional<int> episodes;
  std::string seeds;
  std::optional<long> steps;
  bool export_trajectories = false;
  std::vector<std::string> sets;
};

/// Records greedy episodes and writes one JSON-lines file per episode.
class TrajectoryExporter {
 public:
  TrajectoryExporter(fs::path dir, sim::ScenarioConfig scenario, nlohmann::json info)
      : dir_(std::move(dir)), scenario_(std::move(scenario)), info_(std::move(info)) {}

  marl::StepObserver observer(std::uint64_t eval_seed) {
    return [this, eval_seed](std::size_t env, std::uint64_t episode_seed, const sim::WorldState& before,
                             std::span<const Vec2> actions, const sim::StepResult& result) {
      auto& tr = open_[env];
      if (tr.steps.empty()) {
        tr = io::Trajectory{};
        tr.scenario = scenario_;
        tr.episode_seed = episode_seed;
        tr.info = info_;
        tr.info["eval_seed"] = eval_seed;
        tr.info["episode"] = env;
      }
      io::record_step(tr, before, actions, result);
      if (result.done) {
        char file[96];
        std::snprintf(file, sizeof file, "%s_seed%llu_ep%03zu.jsonl", scenario_.describe().c_str(),
                      static_cast<unsigned long long>(eval_seed), env);
        io::save_trajectory(dir_ / file, tr);
        tr = io::Trajectory{};
        ++written_;
      }
    };
  }
  int written() const { return written_; }

 private:
  fs::path dir_;
  sim::ScenarioConfig scenario_;
  nlohmann::json info_;
  std::map<std::size_t, io::Trajectory> open_;
  int written_ = 0;
};

/// evaluate() with one observer per evaluation seed, so exported files are
/// named after the seed that produced them.
eval::EvalReport evaluate_exporting(marl::Team<float>& team, const sim::ScenarioConfig& scenario,
                                    const eval::EvalOptions& opt, const eval::Provenance& prov,
                                    const OutputDir& out, const std::string& protocol, bool export_trajectories,
                                    const std::string& subdir = "") {
  if (!export_trajectories) return eval::evaluate(team, scenario, opt, prov);
  auto dir = out / "trajectories";
  if (!subdir.empty()) dir /= subdir;
  fs::create_directories(dir);
  TrajectoryExporter exporter(dir, scenario, {{"protocol", protocol}, {"policy", prov.arch}});
  eval::EvalReport merged;
  for (std::size_t k = 0; k < opt.seeds.size(); ++k) {
    eval::EvalOptions one = opt;
    one.seeds = {opt.seeds[k]};
    auto r = eval::evaluate(team, scenario, one, prov, exporter.observer(opt.seeds[k]));
    if (k == 0) {
      merged = r;
      merged.seeds = opt.seeds;
      for (auto& role : merged.roles) role.per_seed.clear();
    }
    if (!r.compatible) return r;
    for (std::size_t i = 0; i < r.roles.size(); ++i) merged.roles[i].per_seed.push_back(r.roles[i].per_seed.front());
  }
  for (auto& role : merged.roles) role.aggregate = eval::aggregate(role.per_seed);
  std::printf("exported %d trajectories to %s\n", exporter.written(), dir.c_str());
  return merged;
}

eval::EvalOptions eval_options(const EvalArgs& a) {
  eval::EvalOptions opt;
  if (a.episodes) {
    if (*a.episodes < 1) throw ConfigError("--episodes must be positive");
    opt.episodes = *a.episodes;
  }
  if (!a.seeds.empty()) {
    opt.seeds = parse_list<std::uint64_t>(a.seeds, 0, "seed");
  }
  return opt;
}

marl::TrainConfig finetune_config(const EvalArgs& a, std::uint64_t seed) {
  marl::TrainConfig c;
  if (!a.config.empty() || !a.sets.empty()) {
    auto overrides = parse_sets(a.sets);
    overrides.try_emplace("scenario.name", "spread");
    c = (a.config.empty() ? io::resolve_config({}, overrides) : io::load_config(a.config, overrides)).train;
  } else {
    c.seed = seed;
  }
  if (a.steps) c.total_steps = *a.steps;
  c.validate();
  return c;
}

int run_eval(const EvalArgs& a) {
  static const std::vector<std::string> protocols{"basic", "zero-shot", "curriculum", "cross-val", "ood"};
  if (std::find(protocols.begin(), protocols.end(), a.protocol) == protocols.end())
    throw ConfigError("unknown protocol '" + a.protocol + "' (basic, zero-shot, curriculum, cross-val, ood)");
  const auto opt = eval_options(a);
  auto ck = io::load_checkpoint<float>(a.checkpoint);
  if (!a.arch.empty()) {
    const auto declared = policy::arch_from_name(a.arch);
    for (const auto& s : ck.team.slots)
      if (s.policy && s.policy->arch() != declared)
        throw ConfigError("checkpoint holds a " + std::string(policy::arch_name(s.policy->arch())) +
                          " policy, not " + a.arch);
  }
  const eval::Provenance prov{team_arch_label(ck.team), ck.scenario.describe(), ck.step};
  const std::string name = a.out.empty() ? "eval-" + a.protocol + "-" + fs::path(a.checkpoint).stem().string() : a.out;
  OutputDir out(output_root() / name);

  std::vector<eval::EvalReport> reports;
  std::vector<std::string> labels;
  std::string label_column = "setting";
  if (a.protocol == "basic") {
    reports.push_back(evaluate_exporting(ck.team, ck.scenario, opt, prov, out, a.protocol, a.export_trajectories));
    labels.push_back(prov.arch);
  } else if (a.protocol == "zero-shot") {
    if (a.targets.empty()) throw ConfigError("zero-shot needs --targets");
    const auto targets = parse_int_list(a.targets);
    // Fixed-width architectures are evaluated too; sizes they cannot read come back marked incompatible.
    label_column = "N";
    for (int n : targets) {
      reports.push_back(evaluate_exporting(ck.team, eval::with_team_size(ck.scenario, n), opt, prov, out, a.protocol,
                                           a.export_trajectories));
      labels.push_back(std::to_string(n));
    }
  } else if (a.protocol == "curriculum") {
    if (a.targets.empty()) throw ConfigError("curriculum needs --targets");
    const auto cfg = finetune_config(a, derive_seed(ck.step, 0xC0));
    for (int n : parse_int_list(a.targets)) {
      const auto target = eval::with_team_size(ck.scenario, n);
      reports.push_back(eval::evaluate(ck.team, target, opt, {prov.arch + "-scl", prov.trained_on, ck.step}));
      labels.push_back(std::to_string(n) + "-scl");
      if (!reports.back().compatible) continue;
      marl::Trainer<float> trainer(cfg, target, eval::clone_team(ck.team));
      trainer.run();
      const auto file = "finetuned_n" + std::to_string(n) + ".ckpt";
      io::save_checkpoint(out / file, trainer.team(), target, ck.step + trainer.steps());
      std::ostringstream csv;
      marl::write_metrics(csv, trainer.metrics());
      io::write_text_atomic(out / ("finetune_n" + std::to_string(n) + "_metrics.csv"), csv.str());
      auto tuned = trainer.team();
      reports.push_back(eval::evaluate(tuned, target, opt,
                                       {prov.arch + "-curr", prov.trained_on + " -> " + target.describe(),
                                        ck.step + trainer.steps()}));
      labels.push_back(std::to_string(n) + "-curr");
    }
  } else if (a.protocol == "cross-val") {
    if (ck.scenario.scenario != sim::Scenario::TagOcclusion) throw ConfigError("cross-val needs a tag checkpoint");
    if (a.opponent.empty()) throw ConfigError("cross-val needs --opponent (a checkpoint path or pursue/flee/random)");
    std::vector<std::string> opponents;
    std::stringstream ss(a.opponent);
    for (std::string item; std::getline(ss, item, ',');) opponents.push_back(io::detail::trim(item));
    for (const auto& opp : opponents) {
      auto team = eval::clone_team(ck.team);
      auto& evader = team.slot(Role::Evader);
      std::string label;
      if (opp == "pursue" || opp == "flee" || opp == "random") {
        evader = {Role::Evader, io::role_spec(Role::Evader, opp).control, nullptr};
        label = opp;
      } else {
        auto other = io::load_checkpoint<float>(opp);
        evader = other.team.slot(Role::Evader);
        label = evader.policy ? std::string(policy::arch_name(evader.policy->arch())) : std::string(marl::control_name(evader.control));
      }
      const auto& pursuer = team.slot(Role::Pursuer);
      const std::string pl = pursuer.policy ? std::string(policy::arch_name(pursuer.policy->arch()))
                                            : std::string(marl::control_name(pursuer.control));
      const std::string setting = pl + "-pursuer/" + label + "-evader";
      reports.push_back(evaluate_exporting(team, ck.scenario, opt, {setting, prov.trained_on, ck.step}, out, a.protocol,
                                           a.export_trajectories, "vs-" + std::to_string(labels.size()) + "-" + label));
      labels.push_back(setting);
    }
  } else {
    if (ck.scenario.scenario != sim::Scenario::Spread) throw ConfigError("ood evaluation is defined for spread");
    std::vector<sim::InitDistribution> tests;
    if (a.inits.empty()) {
      for (auto d : {sim::InitDistribution::Uniform, sim::InitDistribution::LeftSide, sim::InitDistribution::RightSide})
        if (d != ck.scenario.init) tests.push_back(d);
    } else {
      std::stringstream ss(a.inits);
      for (std::string item; std::getline(ss, item, ',');) tests.push_back(sim::init_from_name(io::detail::trim(item)));
    }
    label_column = "init";
    reports = eval::ood_eval(ck.team, ck.scenario, tests, opt, prov);
    for (const auto& r : reports) labels.push_back(r.init);
  }
  write_reports(out, reports, label_column, labels);
  for (const auto& r : reports) print_report(r);
  std::printf("reports written to %s\n", out.path().c_str());
  return kOk;
}

// ---------------------------------------------------------------- check / replay

int run_check(const std::vector<std::string>& suites, std::uint64_t seed) {
  std::vector<std::string> names = suites;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = check::suite_names();
  bool ok = true;
  for (const auto& n : names) {
    const auto r = check::run_suite(n, seed);
    std::cout << check::format_result(r) << std::flush;
    ok = ok && r.passed();
  }
  return ok ? kOk : kProperty;
}

int run_replay(const std::vector<std::string>& files) {
  bool ok = true;
  for (const auto& f : files) {
    const auto r = io::replay(io::load_trajectory(f));
    std::printf("%s: %s (%d steps)%s%s\n", f.c_str(), r.identical ? "bit-identical" : "MISMATCH", r.steps,
                r.identical ? "" : " ", r.mismatch.c_str());
    ok = ok && r.identical;
  }
  return ok ? kOk : kProperty;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LEGO multi-agent training, evaluation and property checks"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a team with MAPPO");
  train->add_option("--config", ta.config, "flat key = value config file");
  train->add_option("--seed", ta.seed, "train.seed");
  train->add_option("--arch", ta.arch, "arch.name: lego, mlp, mlp-local, gcn");
  train->add_option("--scenario", ta.scenario, "scenario.name: spread or tag");
  train->add_option("--agents", ta.agents, "scenario.agents");
  train->add_option("--steps", ta.steps, "train.total_steps");
  train->add_option("--set", ta.sets, "any config key, as key=value");
  train->add_option("--out", ta.out, "output directory name under $LEGO_OUTPUT_ROOT");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("checkpoint", ea.checkpoint, "checkpoint file")->required();
  ev->add_option("--protocol", ea.protocol, "basic, zero-shot, curriculum, cross-val or ood");
  ev->add_option("--targets", ea.targets, "comma-separated team sizes");
  ev->add_option("--arch", ea.arch, "declared architecture; must match the checkpoint");
  ev->add_option("--episodes", ea.episodes, "episodes per seed");
  ev->add_option("--seeds", ea.seeds, "comma-separated evaluation seeds");
  ev->add_option("--steps", ea.steps, "fine-tuning steps per target (curriculum)");
  ev->add_option("--config", ea.config, "training config for curriculum fine-tuning");
  ev->add_option("--set", ea.sets, "training config overrides for curriculum fine-tuning");
  ev->add_option("--opponent", ea.opponent, "cross-val evaders: checkpoint paths or pursue/flee/random");
  ev->add_option("--inits", ea.inits, "ood test inits: uniform, left, right");
  ev->add_flag("--export-trajectories", ea.export_trajectories, "write one JSON-lines file per episode");
  ev->add_option("--out", ea.out, "output directory name under $LEGO_OUTPUT_ROOT");

  std::vector<std::string> suites;
  std::uint64_t check_seed = 0;
  auto* chk = app.add_subcommand("check", "run property suites (equivariance, gradients, attention, gae, physics, all)");
  chk->add_option("suites", suites, "suite names");
  chk->add_option("--seed", check_seed, "random seed for the randomized instances");

  std::vector<std::string> replay_files;
  auto* rep = app.add_subcommand("replay", "re-simulate exported trajectories and diff them bitwise");
  rep->add_option("files", replay_files, "trajectory files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return run_train(ta);
    if (*ev) return run_eval(ea);
    if (*chk) return run_check(suites, check_seed);
    if (*rep) return run_replay(replay_files);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kIo;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
