#include "stochmap/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Stochastic unravelling of open-system maps"};
  app.require_subcommand(1);
  std::string config, out_dir;
  int threads = 1;
  std::uint64_t seed = 0;
  bool dump = false;

  for (const auto& name : stochmap::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seed-override", seed, "master seed (overrides ensemble.master_seed)");
    sub->add_flag("--dump-trajectories", dump, "write noise paths and trajectories");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : stochmap::kExitConfig;
  }

  stochmap::RunOptions opts;
  opts.threads = threads;
  opts.dump_trajectories = dump;
  opts.log = &std::cerr;
  for (CLI::App* sub : app.get_subcommands()) {
    if (!out_dir.empty()) opts.out_dir = out_dir;
    if (sub->count("--seed-override")) opts.seed_override = seed;
    return stochmap::run(sub->get_name(), config, opts);
  }
  return stochmap::kExitConfig;
}
