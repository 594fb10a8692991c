#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedquad/tensor.hpp"

namespace fedquad {

enum class Split { kTrain, kTest };
std::string_view split_name(Split split);

// Features are [N, ...sample extents]; labels lie in [0, num_classes).
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::kTrain;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  // Stacks the selected samples into a [B, ...] batch.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  // Throws DataError when the invariants do not hold.
  void validate() const;
};

// "index,label,x_0,...,x_{F-1}" with features flattened per sample.
std::string dataset_csv(const Dataset& dataset);

// ---------------------------------------------------------------- CIFAR

enum class CifarVariant { kCifar10, kCifar100 };

inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;

struct CifarRecord {
  std::uint8_t coarse_label = 0;  // CIFAR-100 only
  std::uint8_t label = 0;         // CIFAR-10 label or CIFAR-100 fine label
  std::array<std::uint8_t, kCifarPixels> pixels{};  // R, G, B planes, 32x32 row-major
};

struct ChannelNorm {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  bool operator==(const ChannelNorm&) const = default;
};

std::size_t cifar_record_size(CifarVariant variant);
std::size_t cifar_num_classes(CifarVariant variant);
// Record count of the public dataset split.
std::size_t cifar_standard_count(CifarVariant variant, Split split);

// Throws DataError naming `source` and the byte offset of the incomplete
// trailing record when the length is not a whole number of records.
std::vector<CifarRecord> parse_cifar_records(std::string_view bytes, CifarVariant variant,
                                             std::string_view source = "<memory>");
std::string serialize_cifar_records(std::span<const CifarRecord> records, CifarVariant variant);

// Accepts the directory holding the .bin files or its parent containing the
// stock "cifar-10-batches-bin" / "cifar-100-binary" folder.
std::filesystem::path resolve_cifar_dir(const std::filesystem::path& dir, CifarVariant variant);
std::vector<std::filesystem::path> cifar_files(const std::filesystem::path& dir, CifarVariant variant,
                                               Split split);
// Validates file presence and sizes and returns the record count, without
// decoding pixels.
std::size_t scan_cifar(const std::filesystem::path& dir, CifarVariant variant, Split split);

// Per-channel statistics of pixels scaled to [0, 1].
ChannelNorm compute_channel_norm(std::span<const CifarRecord> records);
Dataset cifar_to_dataset(std::span<const CifarRecord> records, CifarVariant variant, Split split,
                         const ChannelNorm& norm);
// Loads a split; without `norm` the statistics of the loaded split are used.
Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant, Split split,
                   std::optional<ChannelNorm> norm = std::nullopt);

// ---------------------------------------------------------------- blobs

struct BlobSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 500;
  std::size_t test_per_class = 500;
  std::size_t dim = 32;
  double spread = 0.33;
  double radius = 1.0;

  bool operator==(const BlobSpec&) const = default;
};

// Class means on a sphere of the given radius, isotropic Gaussian samples
// around them; labels are class-major.
Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed, double radius = 1.0);

struct DatasetPair {
  Dataset train;
  Dataset test;
};
// Train and test sets sharing the same class means.
DatasetPair make_blob_splits(const BlobSpec& spec, std::uint64_t seed);

// Both CIFAR splits, standardized with statistics of the training split
// unless `norm` is given.
DatasetPair load_cifar_pair(const std::filesystem::path& dir, CifarVariant variant,
                            std::optional<ChannelNorm> norm = std::nullopt);

// ---------------------------------------------------------------- partitioning

struct PartitionPlan {
  // Sorted global sample indices per client.
  std::vector<std::vector<std::size_t>> client_indices;
  double alpha = std::numeric_limits<double>::infinity();  // infinity for i.i.d.
  std::uint64_t seed = 0;  // seed of the accepted draw
  std::size_t attempts = 1;

  std::size_t num_clients() const { return client_indices.size(); }
  std::size_t total() const;
};

// Per class, proportions p ~ Dirichlet(alpha * 1) split that class's shuffled
// indices at floor(cumsum(p) * n_class). A plan with an empty client is
// redrawn with seed + 1, up to `max_attempts` draws.
PartitionPlan partition_dirichlet(std::span<const int> labels, std::size_t num_clients, double alpha,
                                  std::uint64_t seed, std::size_t max_attempts = 100);

// Global shuffle then contiguous splits; the first N % clients get one extra.
PartitionPlan partition_iid(std::span<const int> labels, std::size_t num_clients, std::uint64_t seed);

// counts[client][class]
using ClassHistogram = std::vector<std::vector<std::size_t>>;
ClassHistogram class_histogram(const PartitionPlan& plan, std::span<const int> labels,
                               std::size_t num_classes);
// "client,total,class_0,...,class_{K-1}"
std::string histogram_csv(const ClassHistogram& hist);

}  // namespace fedquad
