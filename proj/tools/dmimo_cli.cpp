#include "dmimo/dmimo.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Distributed panel massive-MIMO uplink simulator"};
  app.set_version_flag("--version", std::string("dmimo ") + dmimo::kVersion);
  app.require_subcommand(1);

  std::string config, run_out = "out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run one scenario and write report.json plus metric CSVs");
  run->add_option("config", config, "Scenario JSON file")->required();
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--override", overrides, "Dotted-path override key=value, repeatable");

  std::string spec, sweep_out = "out";
  auto* sweep = app.add_subcommand("sweep", "Run a sweep and write sweep_table.csv and sweep.json");
  sweep->add_option("spec", spec, "Sweep JSON file")->required();
  sweep->add_option("--out", sweep_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  if (*run) return dmimo::cmd_run(config, run_out, overrides, seed, std::cout, std::cerr);
  return dmimo::cmd_sweep(spec, sweep_out, std::cout, std::cerr);
}
