#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hmarl/io.hpp"
#include "hmarl/plot.hpp"

namespace fs = std::filesystem;
using namespace hmarl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void diag(const std::string& msg) {
  std::fprintf(stderr, "hmarl: %s\n", msg.c_str());
}

// Legend label for an aggregate file: the run directory is the natural name,
// the file stem otherwise.
std::string label_for(const fs::path& p) {
  if (p.filename() == "aggregate.csv" && p.has_parent_path() &&
      !p.parent_path().filename().empty())
    return p.parent_path().filename().string();
  return p.stem().string();
}

struct RunArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<long> episodes;
  int jobs = 1;
};

int cmd_run(const RunArgs& args) {
  config::ExperimentConfig cfg;
  try {
    cfg = config::parse_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (args.episodes) cfg.episodes = *args.episodes;
    config::validate(cfg);
  } catch (const Error& e) {
    diag(e.what());
    return kExitConfig;
  }

  const fs::path out(args.out_dir);
  fs::create_directories(out);

  io::RunManifest man;
  man.config = cfg;
  for (const auto& g : goals::goal_set(cfg.task)) man.goal_names.push_back(g.name);
  for (int i = 0; i < cfg.trials; ++i) {
    man.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
    man.trial_files.push_back("trial_" + std::to_string(i) + ".csv");
  }
  man.aggregate_file = "aggregate.csv";
  {
    harness::Trial probe(cfg, cfg.seed);
    for (const auto& [name, graph] : probe.checkpoints())
      man.checkpoint_files.push_back(name);
  }
  man.trajectory_file = "trajectory.txt";
  man.started = io::timestamp_utc();
  man.trial_errors.assign(static_cast<std::size_t>(cfg.trials), "");
  io::write_manifest(out / "manifest.json", man);

  const harness::SuiteResult suite = harness::run_suite(cfg, args.jobs);

  std::vector<const harness::TrialMetrics*> ok;
  bool all_ok = true;
  for (int i = 0; i < cfg.trials; ++i) {
    if (suite.trials[i].has_value()) {
      io::write_metrics_csv(out / man.trial_files[i], *suite.trials[i]);
      ok.push_back(&*suite.trials[i]);
    } else {
      all_ok = false;
    }
  }
  if (!ok.empty()) io::write_aggregate_csv(out / "aggregate.csv", io::aggregate(ok));
  if (suite.first_trial) {
    for (const auto& [name, graph] : suite.first_trial->checkpoints())
      io::write_checkpoint(out / name, *graph);
    io::write_trajectory(out / "trajectory.txt",
                         suite.first_trial->greedy_episode());
  }

  man.status = all_ok ? "complete" : "failed";
  man.finished = io::timestamp_utc();
  man.trial_errors = suite.errors;
  io::write_manifest(out / "manifest.json", man);

  for (int i = 0; i < cfg.trials; ++i) {
    if (!suite.trials[i].has_value()) {
      std::printf("trial %d (seed %llu): FAILED: %s\n", i,
                  static_cast<unsigned long long>(man.seeds[i]),
                  suite.errors[i].c_str());
      continue;
    }
    const auto [r, s] = harness::evaluate_recent(*suite.trials[i]);
    std::printf("trial %d (seed %llu): recent-100 reward %.3f, steps %.1f, %.1fs\n",
                i, static_cast<unsigned long long>(man.seeds[i]), r, s,
                suite.trials[i]->wall_seconds);
  }
  if (!all_ok) {
    diag("one or more trials failed; see manifest.json");
    return kExitRuntime;
  }
  std::printf("wrote %s\n", (out / "manifest.json").string().c_str());
  return 0;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<plot::Series> series;
  for (const std::string& in : inputs)
    series.push_back({label_for(in), io::read_aggregate_csv(in)});
  const std::string svg = plot::render_svg(series);
  auto out = io::detail::open_out(out_path);
  out << svg;
  io::detail::close_checked(out, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_render(const std::string& path) {
  const harness::Trajectory tr = io::read_trajectory(path);
  std::printf("task %s, %ld steps, total reward %g\n",
              std::string(matc::task_name(tr.task)).c_str(), tr.steps,
              tr.total_reward);
  for (std::size_t i = 0; i < tr.frames.size(); ++i)
    std::printf("step %zu\n%s\n", i, tr.frames[i].c_str());
  return 0;
}

int cmd_validate(const std::string& path) {
  try {
    const config::ExperimentConfig cfg = config::parse_config(path);
    std::fputs(config::serialize(cfg).c_str(), stdout);
  } catch (const Error& e) {
    diag(e.what());
    return kExitConfig;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical multi-agent reinforcement learning on the MATC tasks"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "train a suite of seeded trials");
  run->add_option("--config", run_args.config_path, "experiment config file")
      ->required();
  run->add_option("--out", run_args.out_dir, "output directory")->required();
  run->add_option("--seed", run_args.seed, "override the base seed");
  run->add_option("--episodes", run_args.episodes, "override the episode count");
  run->add_option("--jobs", run_args.jobs, "parallel trials")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "chart aggregate learning curves");
  plot_cmd->add_option("inputs", plot_inputs, "aggregate csv files")
      ->required()
      ->expected(-1);
  plot_cmd->add_option("--out", plot_out, "output svg path")->required();

  std::string render_in;
  auto* render_cmd =
      app.add_subcommand("render", "replay a saved trajectory as ascii frames");
  render_cmd->add_option("trajectory", render_in, "trajectory file")->required();

  std::string validate_in;
  auto* validate_cmd =
      app.add_subcommand("validate", "check a config and print its canonical form");
  validate_cmd->add_option("--config", validate_in, "experiment config file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (plot_cmd->parsed()) return cmd_plot(plot_inputs, plot_out);
    if (render_cmd->parsed()) return cmd_render(render_in);
    if (validate_cmd->parsed()) return cmd_validate(validate_in);
  } catch (const ConfigError& e) {
    diag(e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    diag(e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
