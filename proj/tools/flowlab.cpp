// flowlab <command> <config.json> [--seed N] [--workers N] [--out DIR]

#include "flowlab/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Stochastic flow experiments: simulation, gradients, approximation diagnostics"};
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;

  std::string commands;
  for (const auto& c : flowlab::command_names()) commands += (commands.empty() ? "" : ", ") + c;
  app.add_option("command", command, "One of: " + commands)->required();
  app.add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override mc.master_seed");
  app.add_option("--workers", workers, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory (fallback: $FLOWLAB_OUT, then ./flowlab_out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : flowlab::kExitInvalid;
  }
  return flowlab::run_command(command, config, {seed, workers, out});
}
