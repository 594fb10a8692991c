#include <cstring>

#include "fedquad/data.hpp"
#include "fedquad/error.hpp"
#include "fedquad/io.hpp"

namespace fedquad {

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

Shape Dataset::sample_shape() const {
  const Shape& s = features.shape();
  return Shape(s.begin() + 1, s.end());
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  Shape s = features.shape();
  s[0] = indices.size();
  Tensor out(s);
  const std::size_t row = features.row_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) {
      throw InputError("sample index " + std::to_string(indices[i]) + " out of range for dataset of " +
                       std::to_string(size()));
    }
    std::memcpy(out.data() + i * row, features.data() + indices[i] * row, row * sizeof(double));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

void Dataset::validate() const {
  if (features.rank() < 2) throw DataError("dataset features must be [N, ...], got " + shape_str(features.shape()));
  if (features.dim(0) != labels.size()) {
    throw DataError("dataset has " + std::to_string(features.dim(0)) + " feature rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                      " outside [0," + std::to_string(num_classes) + ")");
    }
  }
  if (!features.all_finite()) throw DataError("dataset features contain non-finite values");
}

std::string dataset_csv(const Dataset& dataset) {
  const std::size_t width = shape_numel(dataset.sample_shape());
  std::string out = "index,label";
  for (std::size_t j = 0; j < width; ++j) out += ",x_" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(dataset.labels[i]);
    const double* row = dataset.features.data() + i * width;
    for (std::size_t j = 0; j < width; ++j) out += "," + format_double(row[j]);
    out += '\n';
  }
  return out;
}

}  // namespace fedquad
