#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "fedquad/tensor.hpp"

namespace fedquad::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (double& v : t.storage()) v = dist(gen);
  return t;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& gen) {
  std::uniform_int_distribution<int> dist(0, classes - 1);
  std::vector<int> out(n);
  for (int& y : out) y = dist(gen);
  return out;
}

inline double rel_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Central differences of a scalar function with respect to every entry of x.
inline Tensor numeric_gradient(Tensor& x, const std::function<double()>& f, double h = 1e-6) {
  Tensor g = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f();
    x[i] = orig - h;
    const double down = f();
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Largest entrywise error |a - n| / max(|a|, |n|, floor). The floor keeps
// round-off on exactly-zero gradients from reading as relative error.
inline double max_gradient_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fedquad_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace fedquad::test
