#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace fedquad {

// Local sample positions grouped by class label.
struct ClassIndex {
  std::map<int, std::vector<std::size_t>> by_label;
  std::vector<int> labels_present;  // sorted, each with >= 1 sample
  std::vector<int> labels;          // label of each local position

  std::size_t size() const { return labels.size(); }
};

ClassIndex build_class_index(std::span<const int> labels);

struct QuadrupletRow {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t neg1 = 0;
  std::size_t neg2 = 0;
  int anchor_label = 0;
  // Anchor's class has a single sample, so positive == anchor.
  bool degenerate_positive = false;
  // Only one other class exists, so both negatives share a class.
  bool degenerate_negative = false;
  // No other class exists; the metric term is not computed for this row.
  bool skip_metric = false;
};

struct QuadrupletBatch {
  std::vector<std::size_t> anchor_idx;
  std::vector<std::size_t> positive_idx;
  std::vector<std::size_t> neg1_idx;
  std::vector<std::size_t> neg2_idx;
  std::vector<int> anchor_labels;
  std::vector<QuadrupletRow> rows;

  std::size_t size() const { return anchor_idx.size(); }
  bool any_metric() const;
};

struct SamplerStats {
  std::size_t rows = 0;
  std::size_t degenerate_positive = 0;
  std::size_t degenerate_negative = 0;
  std::size_t skipped_metric = 0;
};

// One row per local sample (each sample is the anchor exactly once), in a
// seeded random order. Positives come uniformly from the anchor's class
// without the anchor; the two negative classes are drawn uniformly without
// replacement from the other present classes, then one sample from each.
std::vector<QuadrupletRow> sample_epoch_quadruplets(const ClassIndex& index, std::uint64_t seed);

// Consecutive chunks of `batch_size` rows; the last chunk may be shorter.
std::vector<QuadrupletBatch> batch_iter(std::span<const QuadrupletRow> rows, std::size_t batch_size);

SamplerStats summarize(std::span<const QuadrupletRow> rows);

}  // namespace fedquad
