#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedquad/data.hpp"
#include "fedquad/model.hpp"
#include "fedquad/tensor.hpp"

namespace fedquad {

struct VarianceReport {
  // Mean over classes of the mean squared distance to the class centroid.
  double intra = 0.0;
  // Mean squared distance over unordered pairs of class centroids.
  double inter = 0.0;
  // inter / intra; +inf when intra == 0.
  double ratio = 0.0;
  std::size_t classes = 0;
};

// Classes without samples are skipped. Throws InputError with fewer than two
// classes present.
VarianceReport variance_report(const Tensor& embeddings, std::span<const int> labels);

// Evaluation-mode embeddings of the first `limit` samples (all when 0),
// computed in chunks.
ForwardResult embed_dataset(EncoderModel& model, const Dataset& dataset, std::size_t limit = 0,
                            std::size_t chunk = 256);

inline constexpr std::size_t kDefaultExportCap = 2000;

// CSV "sample_index,label,e_0..e_{D-1}" of the first min(N, max_samples)
// samples; values use shortest round-trip formatting. The file is written
// atomically.
void export_embeddings(EncoderModel& model, const Dataset& dataset, const std::filesystem::path& path,
                       std::size_t max_samples = kDefaultExportCap);
std::string embeddings_csv(const Tensor& embeddings, std::span<const int> labels);

struct EmbeddingTable {
  std::vector<std::size_t> sample_index;
  std::vector<int> labels;
  Tensor embeddings;
};
EmbeddingTable read_embeddings_csv(const std::filesystem::path& path);

}  // namespace fedquad
