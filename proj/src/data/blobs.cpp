#include <cmath>

#include "fedquad/data.hpp"
#include "fedquad/error.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {
namespace {

std::vector<std::vector<double>> sphere_means(std::size_t num_classes, std::size_t dim, double radius,
                                              std::uint64_t seed) {
  Rng rng(derive_seed(seed, "blob-means"));
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim));
  for (auto& m : means) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& x : m) {
        x = rng.normal(0.0, 1.0);
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : m) x *= radius / norm;
  }
  return means;
}

Dataset sample_blobs(const std::vector<std::vector<double>>& means, std::size_t per_class, double spread,
                     std::uint64_t seed, Split split) {
  const std::size_t k = means.size();
  const std::size_t dim = means.empty() ? 0 : means[0].size();
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = k;
  ds.split = split;
  ds.features = Tensor({k * per_class, dim});
  ds.labels.reserve(k * per_class);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      double* row = ds.features.data() + (c * per_class + i) * dim;
      for (std::size_t j = 0; j < dim; ++j) row[j] = means[c][j] + spread * rng.normal(0.0, 1.0);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

void check_blob_args(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread) {
  if (num_classes < 1 || per_class < 1 || dim < 1) throw ConfigError("blobs: counts and dim must be positive");
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw ConfigError("blobs: spread must be finite and >= 0");
}

}  // namespace

Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                   std::uint64_t seed, double radius) {
  check_blob_args(num_classes, per_class, dim, spread);
  return sample_blobs(sphere_means(num_classes, dim, radius, seed), per_class, spread,
                      derive_seed(seed, "blob-samples"), Split::kTrain);
}

DatasetPair make_blob_splits(const BlobSpec& spec, std::uint64_t seed) {
  check_blob_args(spec.num_classes, spec.per_class, spec.dim, spec.spread);
  if (spec.test_per_class < 1) throw ConfigError("blobs: test_per_class must be positive");
  const auto means = sphere_means(spec.num_classes, spec.dim, spec.radius, seed);
  return {sample_blobs(means, spec.per_class, spec.spread, derive_seed(seed, "blob-train"), Split::kTrain),
          sample_blobs(means, spec.test_per_class, spec.spread, derive_seed(seed, "blob-test"), Split::kTest)};
}

}  // namespace fedquad
