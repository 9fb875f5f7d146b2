#include <iostream>

#include <CLI11.hpp>

#include "spinrally/commands.hpp"

int main(int argc, char** argv) {
  using namespace spinrally;
  CLI::App app{"Curriculum reinforcement learning for a table tennis robot"};
  app.set_version_flag("--version", SPINRALLY_VERSION);
  app.require_subcommand(1);

  CommandOptions o;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::size_t count = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "run seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory (or file for gen-seeds)");
  };

  auto* train = app.add_subcommand("train", "run the three-stage curriculum");
  common(train);
  auto* gen = app.add_subcommand("gen-seeds", "write validated inbound ball seeds to CSV");
  common(gen);
  gen->add_option("--count", count, "number of valid seeds")->default_val(1000);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on validated seeds");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "policy checkpoint (untrained network if omitted)");
  eval->add_option("--episodes", episodes, "episodes to run");
  auto* rep = app.add_subcommand("replay", "replay recorded trajectories against a policy");
  common(rep);
  rep->add_option("--checkpoint", o.checkpoint, "policy checkpoint");
  rep->add_option("--recordings", o.recordings, "directory of trajectory CSV files")->required();
  auto* report = app.add_subcommand("report", "render learning curves and a summary table");
  report->add_option("--metrics", o.metrics, "metrics.csv of a run")->required()->check(CLI::ExistingFile);
  report->add_option("--out", o.out, "output directory (defaults to the metrics folder)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  for (auto* sub : {train, gen, eval, rep}) {
    if (sub->count("--seed")) o.seed = seed;
  }
  if (eval->count("--episodes")) o.episodes = episodes;
  if (*gen) o.count = count;

  if (*train) return cmd_train(o);
  if (*gen) return cmd_gen_seeds(o);
  if (*eval) return cmd_eval(o);
  if (*rep) return cmd_replay(o);
  if (*report) return cmd_report(o);
  return kExitUsage;
}
