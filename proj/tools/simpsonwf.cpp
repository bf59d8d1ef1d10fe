// simpsonwf: run configs for the Wright-Fisher / Moran Simpson-index toolkit.
//
//   simpsonwf <simulate|moments|equilibrium|hitting|compare> --config run.json
//             [--out DIR] [--seed U64] [--threads N] [--order N]
//
// Exit status: 0 success, 1 failed comparison, 2 bad usage or configuration,
// 3 numerical or runtime failure.

#include "simpsonwf/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char **argv) {
  using namespace simpsonwf;
  CLI::App app{"Simpson index dynamics under Wright-Fisher / Moran models"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<int> order;

  for (const char *name : {"simulate", "moments", "equilibrium", "hitting", "compare"}) {
    auto *sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "master seed (overrides montecarlo.master_seed)");
    sub->add_option("--threads", threads, "worker threads for ensembles")->check(CLI::PositiveNumber);
    sub->add_option("--order", order, "closure order N (overrides solver.order)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::exit_usage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto config = cli::load_config(config_path);
    config.command = cli::parse_command(command);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (seed) config.montecarlo.master_seed = *seed;
    if (threads) config.montecarlo.threads = *threads;
    if (order) config.solver.order = *order;
    cli::validate(config);
    return cli::run_command(config, std::cout);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_argument ? cli::exit_usage : 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
