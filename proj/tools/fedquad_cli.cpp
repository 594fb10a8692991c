#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedquad/config.hpp"
#include "fedquad/error.hpp"
#include "fedquad/runner.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Experiment config file (defaults when omitted)");
  cmd->add_option("--seed", flags.seed, "Master seed override");
  cmd->add_option("--out", flags.out, "Output directory override");
  cmd->add_option("--workers", flags.workers, "Concurrent client trainers")->check(CLI::PositiveNumber);
}

fedquad::ExperimentConfig load(const CommonFlags& flags) {
  auto cfg = flags.config.empty() ? fedquad::default_config() : fedquad::parse_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.output.dir = *flags.out;
  if (flags.workers) cfg.workers = *flags.workers;
  fedquad::finalize(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with quadruplet metric losses"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* run = app.add_subcommand("run", "Federated training; writes manifest, rounds.csv and final.fqck");
  auto* centralized = app.add_subcommand("centralized", "Single-model training on the whole training split");
  auto* grid = app.add_subcommand("grid", "Ablation grid over beta, m1, m2 and use_ce; writes grid.csv");
  auto* inspect = app.add_subcommand("inspect-partition", "Per-client class histogram CSV");
  auto* check = app.add_subcommand("check-data", "Validate the configured dataset");
  for (auto* cmd : {run, centralized, grid, inspect, check}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fedquad::exit_code(fedquad::ErrorCategory::kConfig);
  }

  try {
    const auto cfg = load(flags);
    if (run->parsed()) {
      const auto summary = fedquad::run_experiment(cfg, &std::cout);
      std::cout << "artifacts written to " << summary.out_dir.string() << "\n";
    } else if (centralized->parsed()) {
      const auto summary = fedquad::run_centralized_experiment(cfg, &std::cout);
      std::cout << "artifacts written to " << summary.out_dir.string() << "\n";
    } else if (grid->parsed()) {
      const auto cells = fedquad::run_ablation_grid(cfg, &std::cout);
      std::size_t failed = 0;
      for (const auto& c : cells) failed += c.ok ? 0 : 1;
      std::cout << cells.size() << " cells, " << failed << " failed\n";
    } else if (inspect->parsed()) {
      fedquad::inspect_partition(cfg, &std::cout);
    } else if (check->parsed()) {
      std::cout << fedquad::check_data(cfg);
    }
  } catch (const fedquad::Error& e) {
    std::cerr << "fedquad: " << fedquad::category_name(e.category()) << " error: " << e.what() << "\n";
    return fedquad::exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "fedquad: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
