#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fedquad/error.hpp"
#include "fedquad/kernels.hpp"

namespace k = fedquad::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::mt19937_64& gen) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(gen);
  return v;
}

std::vector<const k::KernelTable*> simd_tables() {
  std::vector<const k::KernelTable*> out;
  if (auto* t = k::avx2_table()) out.push_back(t);
  if (auto* t = k::neon_table()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("scalar kernels compute the textbook sums") {
  const auto& s = k::scalar_table();
  const std::vector<double> a{1, 2, 3};
  const std::vector<double> b{4, -5, 6};
  CHECK(s.dot(a.data(), b.data(), 3) == 12.0);
  CHECK(s.squared_distance(a.data(), b.data(), 3) == 9.0 + 49.0 + 9.0);
  std::vector<double> y{1, 1, 1};
  s.axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, 5, 7});
  CHECK(s.dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("scalar adam update matches the closed form for one step") {
  const auto& s = k::scalar_table();
  k::AdamCoeffs c{0.1, 0.9, 0.999, 1e-8, 0.0, 1.0 - 0.9, 1.0 - 0.999};
  double p = 1.0, g = 0.5, m = 0.0, v = 0.0;
  s.adam_update(c, &p, &g, &m, &v, 1);
  // First bias-corrected step moves by lr * sign(g) up to eps.
  CHECK(m == doctest::Approx(0.05));
  CHECK(v == doctest::Approx(0.00025));
  CHECK(p == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("SIMD kernels agree with the scalar reference") {
  const auto tables = simd_tables();
  if (tables.empty()) {
    MESSAGE("no SIMD backend on this machine");
    return;
  }
  const auto& ref = k::scalar_table();
  std::mt19937_64 gen(7);
  for (const auto* t : tables) {
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 100u, 1027u}) {
      const auto a = randv(n, gen);
      const auto b = randv(n, gen);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
      CHECK(std::abs(t->dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= 1e-13 * (mag + 1.0));
      const double d_ref = ref.squared_distance(a.data(), b.data(), n);
      CHECK(std::abs(t->squared_distance(a.data(), b.data(), n) - d_ref) <= 1e-13 * (d_ref + 1.0));

      auto y1 = randv(n, gen);
      auto y2 = y1;
      ref.axpy(0.37, a.data(), y1.data(), n);
      t->axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-14));

      k::AdamCoeffs c{1e-3, 0.9, 0.999, 1e-8, 1e-5, 1.0 - std::pow(0.9, 3), 1.0 - std::pow(0.999, 3)};
      auto p1 = randv(n, gen);
      auto p2 = p1;
      auto m1 = randv(n, gen);
      auto m2 = m1;
      std::vector<double> v1(n), v2(n);
      for (std::size_t i = 0; i < n; ++i) v1[i] = v2[i] = std::abs(a[i]) * 0.01;
      ref.adam_update(c, p1.data(), b.data(), m1.data(), v1.data(), n);
      t->adam_update(c, p2.data(), b.data(), m2.data(), v2.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(p2[i] == doctest::Approx(p1[i]).epsilon(1e-13));
        CHECK(m2[i] == doctest::Approx(m1[i]).epsilon(1e-13));
        CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("backend selection") {
  CHECK(k::parse_backend("scalar") == k::Backend::kScalar);
  CHECK(k::parse_backend("avx2") == k::Backend::kAvx2);
  CHECK(k::parse_backend("neon") == k::Backend::kNeon);
  CHECK_THROWS_AS(k::parse_backend("sse"), fedquad::ConfigError);
  CHECK(k::backend_available(k::Backend::kScalar));
  CHECK(k::backend_available(k::detect_backend()));
  CHECK(k::backend_name(k::Backend::kAvx2) == "avx2");

  const auto before = k::active_backend();
  {
    k::ScopedBackend pin(k::Backend::kScalar);
    CHECK(k::active_backend() == k::Backend::kScalar);
    CHECK(&k::active() == &k::scalar_table());
  }
  CHECK(k::active_backend() == before);

  for (auto b : {k::Backend::kAvx2, k::Backend::kNeon}) {
    if (!k::backend_available(b)) CHECK_THROWS_AS(k::set_backend(b), fedquad::InputError);
  }
}
