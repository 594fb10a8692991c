#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fedquad {

// Independent stream seed for one consumer of randomness: a 64-bit mix of the
// master seed, a purpose tag and optional integer coordinates (client, round,
// epoch, ...). Adding new tags never perturbs existing streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::initializer_list<std::uint64_t> coords = {});

// Seeded generator whose distributions are platform-independent (the engine
// is std::mt19937_64, the distributions come from Boost.Random rather than the
// implementation-defined std:: ones).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
  // Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, n - 1)); }
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  double gamma(double shape);
  std::vector<double> dirichlet(double alpha, std::size_t k);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedquad
