#include "fedquad/runner.hpp"

#include <cstdlib>
#include <ostream>
#include <sstream>

#include "fedquad/checkpoint.hpp"
#include "fedquad/error.hpp"
#include "fedquad/io.hpp"
#include "fedquad/metrics.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {
namespace {

namespace fs = std::filesystem;

CifarVariant cifar_variant(DatasetKind kind) {
  return kind == DatasetKind::kCifar100 ? CifarVariant::kCifar100 : CifarVariant::kCifar10;
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.output.dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::string manifest_text(const ExperimentConfig& cfg, std::string_view command, kernels::Backend backend,
                          const PartitionPlan* plan) {
  ExperimentConfig pinned = cfg;
  pinned.kernels = std::string(kernels::backend_name(backend));
  std::ostringstream out;
  out << "# fedquad " << command << " manifest\n";
  out << "# derived seed model-init = " << derive_seed(cfg.seed, "model-init") << "\n";
  if (cfg.dataset.kind == DatasetKind::kBlobs) {
    out << "# derived seed blobs = " << derive_seed(cfg.seed, "blobs") << "\n";
  }
  if (plan) {
    out << "# derived seed partition = " << derive_seed(cfg.seed, "partition") << "\n";
    out << "# partition draw seed = " << plan->seed << ", attempts = " << plan->attempts << "\n";
  }
  out << "\n" << serialize_config(pinned);
  return out.str();
}

void print_round(std::ostream* console, const RoundRecord& rec, std::size_t rounds) {
  if (!console) return;
  std::ostringstream line;
  line.setf(std::ios::fixed);
  line.precision(4);
  line << "round " << rec.round << "/" << rounds << "  clients=" << rec.participants.size()
       << "  acc=" << rec.eval.accuracy << "  loss=" << rec.losses.loss << "  ce=" << rec.losses.ce
       << "  metric=" << rec.losses.metric << "  ratio=" << rec.variance.ratio;
  line.precision(2);
  line << "  (" << rec.wall_time_seconds << "s)\n";
  *console << line.str() << std::flush;
}

bool exports_round(const ExperimentConfig& cfg, std::size_t round) {
  for (std::size_t r : cfg.output.export_rounds) {
    if (r == round) return true;
  }
  return false;
}

fs::path embedding_path(const fs::path& dir, std::size_t round) {
  return dir / ("embeddings_round" + std::to_string(round) + ".csv");
}

using Trainer = std::function<FederationResult(const ModelSpec&, const DatasetPair&, const RoundCallback&)>;

RunSummary run_with_artifacts(const ExperimentConfig& cfg, std::string_view command, const PartitionPlan* plan,
                              const DatasetPair& data, const Trainer& trainer, std::ostream* console) {
  RunSummary summary;
  summary.backend = kernels::active_backend();
  summary.out_dir = ensure_out_dir(cfg);
  write_file_atomic(summary.out_dir / "manifest.ini", manifest_text(cfg, command, summary.backend, plan));

  const ModelSpec spec = model_spec(cfg, data.train);
  EncoderModel scratch = initial_model(spec, cfg.seed);
  if (exports_round(cfg, 0)) {
    export_embeddings(scratch, data.test, embedding_path(summary.out_dir, 0), cfg.output.export_max_samples);
  }

  std::string csv = rounds_csv_header();
  auto on_round = [&](const RoundRecord& rec, const ModelParams& params) {
    csv += rounds_csv_row(rec);
    print_round(console, rec, cfg.fed.rounds);
    if (exports_round(cfg, rec.round)) {
      scratch.load(params);
      export_embeddings(scratch, data.test, embedding_path(summary.out_dir, rec.round),
                        cfg.output.export_max_samples);
    }
  };
  summary.result = trainer(spec, data, on_round);
  write_file_atomic(summary.out_dir / "rounds.csv", csv);
  save_checkpoint(summary.result.final_params, summary.out_dir / "final.fqck");
  return summary;
}

}  // namespace

kernels::Backend apply_kernels(const ExperimentConfig& cfg) {
  if (cfg.kernels != "auto") {
    const auto backend = kernels::parse_backend(cfg.kernels);
    if (!kernels::backend_available(backend)) {
      throw ConfigError("experiment.kernels: backend " + cfg.kernels + " is not available on this machine");
    }
    kernels::set_backend(backend);
  }
  return kernels::active_backend();
}

fs::path dataset_root(const ExperimentConfig& cfg) {
  if (!cfg.dataset.path.empty()) return cfg.dataset.path;
  if (const char* env = std::getenv("FEDQUAD_DATA_DIR"); env && *env) return env;
  throw ConfigError("dataset.path: empty and FEDQUAD_DATA_DIR is not set");
}

DatasetPair prepare_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == DatasetKind::kBlobs) {
    return make_blob_splits(cfg.dataset.blobs, derive_seed(cfg.seed, "blobs"));
  }
  return load_cifar_pair(dataset_root(cfg), cifar_variant(cfg.dataset.kind), cfg.dataset.norm);
}

PartitionPlan make_partition(const ExperimentConfig& cfg, const Dataset& train) {
  const std::uint64_t seed = derive_seed(cfg.seed, "partition");
  if (cfg.partition.scheme == PartitionScheme::kIid) {
    return partition_iid(train.labels, cfg.fed.num_clients, seed);
  }
  return partition_dirichlet(train.labels, cfg.fed.num_clients, cfg.partition.alpha, seed,
                             cfg.partition.max_attempts);
}

std::string rounds_csv_header() {
  return "round,participants,accuracy,loss,ce,metric,intra,inter,ratio,degenerate_positive,"
         "degenerate_negative,skipped_metric\n";
}

std::string rounds_csv_row(const RoundRecord& rec) {
  std::string row;
  row += std::to_string(rec.round) + ",";
  row += std::to_string(rec.participants.size()) + ",";
  row += format_double(rec.eval.accuracy) + ",";
  row += format_double(rec.losses.loss) + ",";
  row += format_double(rec.losses.ce) + ",";
  row += format_double(rec.losses.metric) + ",";
  row += format_double(rec.variance.intra) + ",";
  row += format_double(rec.variance.inter) + ",";
  row += format_double(rec.variance.ratio) + ",";
  row += std::to_string(rec.sampler.degenerate_positive) + ",";
  row += std::to_string(rec.sampler.degenerate_negative) + ",";
  row += std::to_string(rec.sampler.skipped_metric) + "\n";
  return row;
}

RunSummary run_experiment(const ExperimentConfig& cfg, std::ostream* console) {
  apply_kernels(cfg);
  const DatasetPair data = prepare_data(cfg);
  const PartitionPlan plan = make_partition(cfg, data.train);
  return run_with_artifacts(
      cfg, "run", &plan, data,
      [&](const ModelSpec& spec, const DatasetPair& d, const RoundCallback& cb) {
        return run_federation(cfg.fed, spec, d.train, d.test, plan, cb);
      },
      console);
}

RunSummary run_centralized_experiment(const ExperimentConfig& cfg, std::ostream* console) {
  apply_kernels(cfg);
  const DatasetPair data = prepare_data(cfg);
  return run_with_artifacts(
      cfg, "centralized", nullptr, data,
      [&](const ModelSpec& spec, const DatasetPair& d, const RoundCallback& cb) {
        return run_centralized(cfg.fed, spec, d.train, d.test, cb);
      },
      console);
}

std::vector<GridCell> grid_cells(const GridConfig& grid) {
  std::vector<GridCell> cells;
  for (double beta : grid.beta) {
    for (double m1 : grid.m1) {
      for (double m2 : grid.m2) {
        for (bool use_ce : grid.use_ce) {
          GridCell cell;
          cell.beta = beta;
          cell.m1 = m1;
          cell.m2 = m2;
          cell.use_ce = use_ce;
          cells.push_back(cell);
        }
      }
    }
  }
  return cells;
}

std::vector<GridCell> run_ablation_grid(const ExperimentConfig& cfg, std::ostream* console) {
  auto cells = grid_cells(cfg.grid);
  if (cells.empty()) throw ConfigError("grid: no cells to run");
  const auto backend = apply_kernels(cfg);
  const DatasetPair data = prepare_data(cfg);
  const PartitionPlan plan = make_partition(cfg, data.train);
  const fs::path dir = ensure_out_dir(cfg);
  write_file_atomic(dir / "manifest.ini", manifest_text(cfg, "grid", backend, &plan));
  const ModelSpec spec = model_spec(cfg, data.train);

  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& cell = cells[i];
    FedConfig fed = cfg.fed;
    fed.objective.quad.beta = cell.beta;
    fed.objective.quad.m1 = cell.m1;
    fed.objective.quad.m2 = cell.m2;
    fed.objective.use_ce = cell.use_ce;
    try {
      const auto result = run_federation(fed, spec, data.train, data.test, plan);
      const RoundRecord& last = result.history.back();
      cell.ok = true;
      cell.final_accuracy = last.eval.accuracy;
      cell.final_ratio = last.variance.ratio;
    } catch (const Error& e) {
      cell.ok = false;
      cell.note = std::string(category_name(e.category())) + ": " + e.what();
    }
    if (console) {
      std::ostringstream line;
      line << "cell " << (i + 1) << "/" << cells.size() << "  beta=" << format_double(cell.beta)
           << " m1=" << format_double(cell.m1) << " m2=" << format_double(cell.m2)
           << " use_ce=" << (cell.use_ce ? "true" : "false") << "  ";
      if (cell.ok) {
        line << "acc=" << format_double(cell.final_accuracy);
      } else {
        line << "failed: " << cell.note;
      }
      *console << line.str() << "\n" << std::flush;
    }
  }
  write_file_atomic(dir / "grid.csv", grid_csv(cells));
  return cells;
}

std::string grid_csv(const std::vector<GridCell>& cells) {
  std::string out = "beta,m1,m2,use_ce,final_accuracy,final_ratio,status,note\n";
  for (const auto& c : cells) {
    std::string note = c.note;
    for (char& ch : note) {
      if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ';';
    }
    out += format_double(c.beta) + "," + format_double(c.m1) + "," + format_double(c.m2) + "," +
           (c.use_ce ? "true" : "false") + ",";
    out += c.ok ? format_double(c.final_accuracy) + "," + format_double(c.final_ratio) + ",ok," : ",,failed,";
    out += note + "\n";
  }
  return out;
}

ClassHistogram inspect_partition(const ExperimentConfig& cfg, std::ostream* console) {
  const DatasetPair data = prepare_data(cfg);
  const PartitionPlan plan = make_partition(cfg, data.train);
  const auto hist = class_histogram(plan, data.train.labels, data.train.num_classes);
  const fs::path dir = ensure_out_dir(cfg);
  const std::string csv = histogram_csv(hist);
  write_file_atomic(dir / "partition_histogram.csv", csv);
  if (console) *console << csv << std::flush;
  return hist;
}

std::string check_data(const ExperimentConfig& cfg) {
  std::ostringstream out;
  if (cfg.dataset.kind == DatasetKind::kBlobs) {
    const DatasetPair data = prepare_data(cfg);
    data.train.validate();
    data.test.validate();
    out << "blobs: train=" << data.train.size() << " test=" << data.test.size()
        << " classes=" << data.train.num_classes << " dim=" << cfg.dataset.blobs.dim << "\n";
    return out.str();
  }
  const auto variant = cifar_variant(cfg.dataset.kind);
  const fs::path dir = resolve_cifar_dir(dataset_root(cfg), variant);
  out << dataset_kind_name(cfg.dataset.kind) << ": " << dir.string() << "\n";
  for (Split split : {Split::kTrain, Split::kTest}) {
    const std::size_t n = scan_cifar(dir, variant, split);
    const std::size_t expected = cifar_standard_count(variant, split);
    out << "  " << split_name(split) << ": " << n << " records";
    if (n != expected) out << " (standard split has " << expected << ")";
    out << "\n";
  }
  return out.str();
}

}  // namespace fedquad
