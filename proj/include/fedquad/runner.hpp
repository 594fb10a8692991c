#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedquad/config.hpp"
#include "fedquad/federation.hpp"
#include "fedquad/kernels.hpp"

namespace fedquad {

// Pins the configured kernel backend ("auto" keeps the current one, which
// honours $FEDQUAD_KERNELS) and
// returns the backend in use.
kernels::Backend apply_kernels(const ExperimentConfig& cfg);

// CIFAR root from dataset.path, else $FEDQUAD_DATA_DIR.
std::filesystem::path dataset_root(const ExperimentConfig& cfg);
DatasetPair prepare_data(const ExperimentConfig& cfg);
PartitionPlan make_partition(const ExperimentConfig& cfg, const Dataset& train);

std::string rounds_csv_header();
std::string rounds_csv_row(const RoundRecord& rec);

struct RunSummary {
  FederationResult result;
  std::filesystem::path out_dir;
  kernels::Backend backend = kernels::Backend::kScalar;
};

// Writes manifest.ini, rounds.csv, final.fqck and embeddings_round<t>.csv for
// each configured export round into cfg.output.dir. `console` receives one
// line per round and may be null.
RunSummary run_experiment(const ExperimentConfig& cfg, std::ostream* console = nullptr);
// Same artifacts for single-model training on the whole training split.
RunSummary run_centralized_experiment(const ExperimentConfig& cfg, std::ostream* console = nullptr);

struct GridCell {
  double beta = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  bool use_ce = true;
  bool ok = false;
  double final_accuracy = 0.0;
  double final_ratio = 0.0;
  std::string note;
};

// Cartesian product of the grid axes in (beta, m1, m2, use_ce) order. Cells
// that fail are recorded with the error message and the grid continues.
std::vector<GridCell> grid_cells(const GridConfig& grid);
std::vector<GridCell> run_ablation_grid(const ExperimentConfig& cfg, std::ostream* console = nullptr);
std::string grid_csv(const std::vector<GridCell>& cells);

// Writes partition_histogram.csv and returns the histogram.
ClassHistogram inspect_partition(const ExperimentConfig& cfg, std::ostream* console = nullptr);

// Validates the configured dataset without training; returns a short report.
std::string check_data(const ExperimentConfig& cfg);

}  // namespace fedquad
