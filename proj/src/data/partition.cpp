#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "fedquad/data.hpp"
#include "fedquad/error.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {

std::size_t PartitionPlan::total() const {
  std::size_t n = 0;
  for (const auto& c : client_indices) n += c.size();
  return n;
}

PartitionPlan partition_dirichlet(std::span<const int> labels, std::size_t num_clients, double alpha,
                                  std::uint64_t seed, std::size_t max_attempts) {
  if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (labels.size() < num_clients) {
    throw DataError("cannot give " + std::to_string(num_clients) + " clients a sample each from " +
                    std::to_string(labels.size()) + " samples");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(max_attempts, 1); ++attempt) {
    const std::uint64_t draw_seed = seed + attempt;
    Rng rng(draw_seed);
    PartitionPlan plan;
    plan.alpha = alpha;
    plan.seed = draw_seed;
    plan.attempts = attempt + 1;
    plan.client_indices.assign(num_clients, {});
    for (const auto& [label, members] : by_class) {
      std::vector<std::size_t> idx = members;
      rng.shuffle(idx);
      const std::vector<double> p = rng.dirichlet(alpha, num_clients);
      const double n = static_cast<double>(idx.size());
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t c = 0; c < num_clients; ++c) {
        std::size_t end = idx.size();
        if (c + 1 < num_clients) {
          cum += p[c];
          end = std::min(idx.size(), static_cast<std::size_t>(std::floor(cum * n)));
          end = std::max(end, begin);
        }
        plan.client_indices[c].insert(plan.client_indices[c].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                                      idx.begin() + static_cast<std::ptrdiff_t>(end));
        begin = end;
      }
    }
    const bool any_empty = std::any_of(plan.client_indices.begin(), plan.client_indices.end(),
                                       [](const auto& c) { return c.empty(); });
    if (any_empty) continue;
    for (auto& c : plan.client_indices) std::sort(c.begin(), c.end());
    return plan;
  }
  throw DataError("dirichlet partition left a client empty in all " + std::to_string(max_attempts) +
                  " attempts (alpha=" + std::to_string(alpha) + ", clients=" + std::to_string(num_clients) + ")");
}

PartitionPlan partition_iid(std::span<const int> labels, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
  if (labels.size() < num_clients) {
    throw DataError("cannot give " + std::to_string(num_clients) + " clients a sample each from " +
                    std::to_string(labels.size()) + " samples");
  }
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  PartitionPlan plan;
  plan.seed = seed;
  plan.client_indices.resize(num_clients);
  const std::size_t base = idx.size() / num_clients;
  const std::size_t extra = idx.size() % num_clients;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < num_clients; ++c) {
    const std::size_t take = base + (c < extra ? 1 : 0);
    plan.client_indices[c].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                                  idx.begin() + static_cast<std::ptrdiff_t>(pos + take));
    std::sort(plan.client_indices[c].begin(), plan.client_indices[c].end());
    pos += take;
  }
  return plan;
}

ClassHistogram class_histogram(const PartitionPlan& plan, std::span<const int> labels,
                               std::size_t num_classes) {
  ClassHistogram hist(plan.num_clients(), std::vector<std::size_t>(num_classes, 0));
  for (std::size_t c = 0; c < plan.num_clients(); ++c) {
    for (std::size_t i : plan.client_indices[c]) {
      const int y = labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw DataError("label " + std::to_string(y) + " outside histogram range");
      }
      ++hist[c][static_cast<std::size_t>(y)];
    }
  }
  return hist;
}

std::string histogram_csv(const ClassHistogram& hist) {
  std::ostringstream out;
  const std::size_t k = hist.empty() ? 0 : hist[0].size();
  out << "client,total";
  for (std::size_t j = 0; j < k; ++j) out << ",class_" << j;
  out << '\n';
  for (std::size_t c = 0; c < hist.size(); ++c) {
    std::size_t total = 0;
    for (std::size_t v : hist[c]) total += v;
    out << c << ',' << total;
    for (std::size_t v : hist[c]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace fedquad
