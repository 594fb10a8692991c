#include "fedquad/sampler.hpp"

#include <numeric>

#include "fedquad/error.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {

ClassIndex build_class_index(std::span<const int> labels) {
  ClassIndex index;
  index.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < labels.size(); ++i) index.by_label[labels[i]].push_back(i);
  for (const auto& [label, members] : index.by_label) index.labels_present.push_back(label);
  return index;
}

bool QuadrupletBatch::any_metric() const {
  for (const auto& r : rows) {
    if (!r.skip_metric) return true;
  }
  return false;
}

std::vector<QuadrupletRow> sample_epoch_quadruplets(const ClassIndex& index, std::uint64_t seed) {
  const std::size_t n = index.size();
  if (n == 0) throw InputError("sample_epoch_quadruplets: empty class index");
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  // Position of every sample inside its class list, for exclusion draws.
  std::vector<std::size_t> rank_in_class(n);
  for (const auto& [label, members] : index.by_label) {
    for (std::size_t j = 0; j < members.size(); ++j) rank_in_class[members[j]] = j;
  }

  auto draw_excluding = [&rng](const std::vector<std::size_t>& pool, std::size_t excluded_rank) {
    std::size_t j = rng.index(pool.size() - 1);
    if (j >= excluded_rank) ++j;
    return pool[j];
  };

  std::vector<int> others;
  others.reserve(index.labels_present.size());
  std::vector<QuadrupletRow> rows;
  rows.reserve(n);
  for (std::size_t a : order) {
    QuadrupletRow row;
    row.anchor = a;
    row.anchor_label = index.labels[a];
    const auto& same = index.by_label.at(row.anchor_label);
    if (same.size() >= 2) {
      row.positive = draw_excluding(same, rank_in_class[a]);
    } else {
      row.positive = a;
      row.degenerate_positive = true;
    }

    others.clear();
    for (int label : index.labels_present) {
      if (label != row.anchor_label) others.push_back(label);
    }
    if (others.empty()) {
      row.neg1 = row.neg2 = a;
      row.skip_metric = true;
    } else if (others.size() == 1) {
      const auto& pool = index.by_label.at(others[0]);
      const std::size_t j = rng.index(pool.size());
      row.neg1 = pool[j];
      row.neg2 = pool.size() >= 2 ? draw_excluding(pool, j) : row.neg1;
      row.degenerate_negative = true;
    } else {
      const std::size_t c1 = rng.index(others.size());
      std::size_t c2 = rng.index(others.size() - 1);
      if (c2 >= c1) ++c2;
      const auto& pool1 = index.by_label.at(others[c1]);
      const auto& pool2 = index.by_label.at(others[c2]);
      row.neg1 = pool1[rng.index(pool1.size())];
      row.neg2 = pool2[rng.index(pool2.size())];
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<QuadrupletBatch> batch_iter(std::span<const QuadrupletRow> rows, std::size_t batch_size) {
  if (batch_size == 0) throw InputError("batch_iter: batch_size must be >= 1");
  std::vector<QuadrupletBatch> batches;
  for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
    const std::size_t end = std::min(rows.size(), begin + batch_size);
    QuadrupletBatch b;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = rows[i];
      b.anchor_idx.push_back(r.anchor);
      b.positive_idx.push_back(r.positive);
      b.neg1_idx.push_back(r.neg1);
      b.neg2_idx.push_back(r.neg2);
      b.anchor_labels.push_back(r.anchor_label);
      b.rows.push_back(r);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

SamplerStats summarize(std::span<const QuadrupletRow> rows) {
  SamplerStats s;
  s.rows = rows.size();
  for (const auto& r : rows) {
    s.degenerate_positive += r.degenerate_positive ? 1 : 0;
    s.degenerate_negative += r.degenerate_negative ? 1 : 0;
    s.skipped_metric += r.skip_metric ? 1 : 0;
  }
  return s;
}

}  // namespace fedquad
