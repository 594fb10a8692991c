#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedquad/data.hpp"
#include "fedquad/federation.hpp"
#include "fedquad/model.hpp"

// Experiment configuration files are flat INI-style text:
//
//   # comment            (also ';' comments; blank lines ignored)
//   [section]
//   key = value
//
// Every key belongs to a section; unknown sections or keys, duplicate keys
// and malformed values are errors that report the line and "section.key".
// Lists are comma separated. Booleans are true/false. See README.md for the
// full key table.
namespace fedquad {

enum class DatasetKind { kBlobs, kCifar10, kCifar100 };
enum class PartitionScheme { kIid, kDirichlet };

std::string_view dataset_kind_name(DatasetKind kind);
std::string_view partition_scheme_name(PartitionScheme scheme);
std::string_view model_kind_name(ModelKind kind);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kBlobs;
  std::string path;  // CIFAR root; falls back to $FEDQUAD_DATA_DIR when empty
  BlobSpec blobs;
  // Per-channel standardization; computed from the train split when unset.
  std::optional<ChannelNorm> norm;

  bool operator==(const DatasetConfig&) const = default;
};

struct PartitionConfig {
  PartitionScheme scheme = PartitionScheme::kDirichlet;
  double alpha = 0.5;
  std::size_t max_attempts = 100;

  bool operator==(const PartitionConfig&) const = default;
};

struct ModelConfig {
  // Unset: mlp for blobs, cnn for CIFAR.
  std::optional<ModelKind> kind;
  std::vector<std::size_t> hidden_dims{64};
  std::size_t embedding_dim = 128;
  std::vector<std::size_t> conv_channels{64, 128, 256};

  bool operator==(const ModelConfig&) const = default;
};

struct OutputConfig {
  std::string dir = "runs/fedquad";
  // Rounds after which test embeddings are exported (0 = initial model).
  std::vector<std::size_t> export_rounds;
  std::size_t export_max_samples = 2000;

  bool operator==(const OutputConfig&) const = default;
};

struct GridConfig {
  std::vector<double> beta{0.5, 1.0};
  std::vector<double> m1{1.0, 2.0, 5.0};
  std::vector<double> m2{0.5, 1.0};
  std::vector<bool> use_ce{true, false};

  bool operator==(const GridConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string kernels = "auto";  // auto | scalar | avx2 | neon
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  FedConfig fed;  // fed.seed and fed.workers mirror the top-level fields
  OutputConfig output;
  GridConfig grid;

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config();
ExperimentConfig parse_config_text(std::string_view text, std::string_view source = "<config>");
ExperimentConfig parse_config(const std::filesystem::path& path);
// Fully explicit text that parses back to an equal configuration.
std::string serialize_config(const ExperimentConfig& cfg);

// Cross-field checks and default resolution (model kind); throws ConfigError
// naming the key path.
void finalize(ExperimentConfig& cfg);

ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& train);

}  // namespace fedquad
