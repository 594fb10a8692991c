#include <cmath>
#include <cstring>
#include <sstream>

#include "fedquad/error.hpp"
#include "fedquad/tensor.hpp"

namespace fedquad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw InputError("tensor shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

std::size_t Tensor::row_size() const { return shape_.empty() ? 1 : data_.size() / shape_[0]; }

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t n = row_size();
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t n = row_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) {
    throw InputError("row slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(shape_));
  }
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t n = row_size();
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                                  data_.begin() + static_cast<std::ptrdiff_t>(end * n)));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor();
  Shape s = parts[0].shape();
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    Shape trailing = p.shape();
    if (trailing.size() != s.size() || !std::equal(trailing.begin() + 1, trailing.end(), s.begin() + 1)) {
      throw InputError("concat_rows: mismatched shapes " + shape_str(s) + " and " + shape_str(trailing));
    }
    rows += p.dim(0);
  }
  s[0] = rows;
  std::vector<double> data;
  data.reserve(shape_numel(s));
  for (const Tensor& p : parts) data.insert(data.end(), p.storage().begin(), p.storage().end());
  return Tensor(std::move(s), std::move(data));
}

}  // namespace fedquad
