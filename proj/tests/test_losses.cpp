#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "fedquad/error.hpp"
#include "fedquad/losses.hpp"
#include "loss_oracles.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace fedquad;
using fedquad::test::max_gradient_error;
using fedquad::test::numeric_gradient;
using fedquad::test::random_labels;
using fedquad::test::random_tensor;
using fedquad::test::rows;
using fedquad::test::quad_has_kink;

namespace {

constexpr double kOracleTol = 1e-10;
constexpr double kLossGradTol = 1e-6;
constexpr int kOracleBatches = 100;

Tensor mat(std::size_t b, std::size_t d, std::vector<double> v) { return Tensor({b, d}, std::move(v)); }

}  // namespace

TEST_CASE("cross entropy matches brute-force softmax") {
  std::mt19937_64 gen(11);
  for (int t = 0; t < kOracleBatches; ++t) {
    const std::size_t b = 1 + gen() % 8, k = 2 + gen() % 9;
    const Tensor logits = random_tensor({b, k}, gen, 3.0);
    const auto labels = random_labels(b, static_cast<int>(k), gen);
    const auto out = cross_entropy(logits, labels);
    CHECK(std::abs(out.value - oracle::cross_entropy(rows(logits), labels)) <= kOracleTol);
  }
}

TEST_CASE("cross entropy closed forms and errors") {
  const Tensor uniform({3, 10}, 0.7);
  CHECK(cross_entropy(uniform, std::vector<int>{0, 4, 9}).value == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  double previous = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 100.0}) {
    const Tensor l = mat(1, 3, {margin, 0.0, 0.0});
    const double v = cross_entropy(l, std::vector<int>{0}).value;
    CHECK(v < previous);
    previous = v;
  }
  CHECK(previous < 1e-40);
  // Large logits stay finite thanks to max subtraction.
  CHECK(std::isfinite(cross_entropy(mat(1, 2, {1000.0, -1000.0}), std::vector<int>{1}).value));
  CHECK_THROWS_AS(cross_entropy(uniform, std::vector<int>{0, 4, 10}), InputError);
  CHECK_THROWS_AS(cross_entropy(uniform, std::vector<int>{0, -1, 1}), InputError);
  CHECK_THROWS_AS(cross_entropy(uniform, std::vector<int>{0, 1}), InputError);
}

TEST_CASE("cross entropy gradient is (softmax - onehot) / B") {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 20; ++t) {
    const std::size_t b = 1 + gen() % 5, k = 2 + gen() % 5;
    Tensor logits = random_tensor({b, k}, gen);
    const auto labels = random_labels(b, static_cast<int>(k), gen);
    const auto out = cross_entropy(logits, labels);
    const Tensor num = numeric_gradient(logits, [&] { return cross_entropy(logits, labels).value; });
    CHECK(max_gradient_error(out.grads[0], num) <= kLossGradTol);
  }
}

TEST_CASE("metric losses match brute-force oracles") {
  std::mt19937_64 gen(13);
  for (int t = 0; t < kOracleBatches; ++t) {
    const std::size_t b = 1 + gen() % 10, d = 1 + gen() % 6;
    const bool sq = t % 2 == 0;
    const double m1 = std::uniform_real_distribution<double>(0, 3)(gen);
    const double m2 = std::uniform_real_distribution<double>(0, 3)(gen);
    const Tensor a = random_tensor({b, d}, gen), p = random_tensor({b, d}, gen);
    const Tensor n1 = random_tensor({b, d}, gen), n2 = random_tensor({b, d}, gen);
    const QuadLossConfig cfg{0.5, m1, m2, sq};
    CHECK(std::abs(quad_star(a, p, n1, n2, cfg).value -
                   oracle::quad_star(rows(a), rows(p), rows(n1), rows(n2), m1, m2, sq)) <= kOracleTol);
    CHECK(std::abs(triplet_loss(a, p, n1, m1, sq).value - oracle::triplet(rows(a), rows(p), rows(n1), m1, sq)) <=
          kOracleTol);
    CHECK(std::abs(quadruplet_traditional(a, p, n1, n2, m1, m2, sq).value -
                   oracle::quadruplet_traditional(rows(a), rows(p), rows(n1), rows(n2), m1, m2, sq)) <= kOracleTol);

    const std::size_t bs = 2 + gen() % 10;
    const Tensor z = random_tensor({bs, d}, gen);
    const auto labels = random_labels(bs, 1 + static_cast<int>(gen() % 4), gen);
    const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(gen);
    CHECK(std::abs(supcon_loss(z, labels, tau).value - oracle::supcon(rows(z), labels, tau)) <= kOracleTol);
  }
}

TEST_CASE("quad_star hand examples") {
  const QuadLossConfig plain{0.5, 1.0, 0.5, false};
  const auto out = quad_star(mat(1, 2, {0, 0}), mat(1, 2, {1, 0}), mat(1, 2, {1.5, 0}), mat(1, 2, {3, 0}), plain);
  CHECK(out.value == doctest::Approx(0.5).epsilon(1e-15));

  // z_a == z_p and negatives beyond the margins: both hinges inactive.
  const QuadLossConfig cfg;
  const Tensor a = mat(2, 2, {0, 0, 1, 1});
  const Tensor n = mat(2, 2, {2, 0, 3, 1});
  const auto zero = quad_star(a, a, n, n, cfg);
  CHECK(zero.value == 0.0);
  for (const auto& g : zero.grads)
    for (double v : g.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(quad_star(a, a, n, mat(1, 2, {0, 0}), cfg), InputError);
  CHECK_THROWS_AS(quad_star(a, a, n, Tensor({2, 3}), cfg), InputError);
}

TEST_CASE("triplet and traditional quadruplet hand examples") {
  CHECK(triplet_loss(mat(1, 1, {0}), mat(1, 1, {1}), mat(1, 1, {1}), 1.0, false).value == doctest::Approx(1.0));
  const Tensor a = mat(1, 2, {0, 0});
  CHECK(triplet_loss(a, a, mat(1, 2, {3, 0}), 1.0).value == 0.0);
  CHECK(quadruplet_traditional(a, a, a, a, 1.5, 0.25).value == doctest::Approx(1.75));
  CHECK(quadruplet_traditional(mat(1, 1, {0}), mat(1, 1, {0}), mat(1, 1, {5}), mat(1, 1, {5}), 1.0, 1.0, false).value ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(triplet_loss(a, a, mat(2, 2, {0, 0, 0, 0}), 1.0), InputError);
}

TEST_CASE("structural relations between the metric losses") {
  std::mt19937_64 gen(14);
  for (int t = 0; t < 50; ++t) {
    const std::size_t b = 1 + gen() % 6, d = 1 + gen() % 4;
    const bool sq = t % 2 == 1;
    const Tensor a = random_tensor({b, d}, gen), p = random_tensor({b, d}, gen);
    const Tensor n1 = random_tensor({b, d}, gen), n2 = random_tensor({b, d}, gen);
    // With a vanishing second margin and a far-away second negative, quad_star
    // reduces to the triplet loss on n1.
    Tensor far = n2;
    for (double& v : far.storage()) v += 1e3;
    const QuadLossConfig cfg{1.0, 0.8, 0.0, sq};
    CHECK(quad_star(a, p, n1, far, cfg).value == doctest::Approx(triplet_loss(a, p, n1, 0.8, sq).value));
    // Traditional quadruplet with n2 placed like the anchor relative to n1 equals quad_star.
    Tensor moved = n2;
    for (std::size_t i = 0; i < b * d; ++i) moved[i] = n1[i] + (n2[i] - a[i]);
    const double trad = quadruplet_traditional(a, p, n1, moved, 0.7, 0.4, sq).value;
    const double quad = quad_star(a, p, n1, n2, {1.0, 0.7, 0.4, sq}).value;
    CHECK(trad == doctest::Approx(quad).epsilon(1e-12));
  }
}

TEST_CASE("quad_star invariants") {
  std::mt19937_64 gen(15);
  for (int t = 0; t < 50; ++t) {
    const std::size_t b = 1 + gen() % 6;
    const bool sq = t % 2 == 0;
    const QuadLossConfig cfg{0.5, 1.0, 0.5, sq};
    Tensor a = random_tensor({b, 2}, gen), p = random_tensor({b, 2}, gen);
    Tensor n1 = random_tensor({b, 2}, gen), n2 = random_tensor({b, 2}, gen);
    const double base = quad_star(a, p, n1, n2, cfg).value;
    CHECK(base >= 0.0);

    const double th = std::uniform_real_distribution<double>(0, 6.28)(gen);
    const double sx = std::normal_distribution<double>(0, 5)(gen), sy = std::normal_distribution<double>(0, 5)(gen);
    auto transform = [&](Tensor t2, bool rotate) {
      for (std::size_t i = 0; i < b; ++i) {
        const double x = t2[2 * i], y = t2[2 * i + 1];
        if (rotate) {
          t2[2 * i] = std::cos(th) * x - std::sin(th) * y;
          t2[2 * i + 1] = std::sin(th) * x + std::cos(th) * y;
        } else {
          t2[2 * i] = x + sx;
          t2[2 * i + 1] = y + sy;
        }
      }
      return t2;
    };
    for (bool rotate : {true, false}) {
      const double moved = quad_star(transform(a, rotate), transform(p, rotate), transform(n1, rotate),
                                     transform(n2, rotate), cfg).value;
      CHECK(moved == doctest::Approx(base).epsilon(1e-12));
      if (!rotate) {
        const double tl = triplet_loss(transform(a, false), transform(p, false), transform(n1, false), 1.0, sq).value;
        CHECK(tl == doctest::Approx(triplet_loss(a, p, n1, 1.0, sq).value).epsilon(1e-12));
      }
    }

    // Pushing n1 further along the a->n1 ray never increases the loss.
    Tensor further = n1;
    for (std::size_t i = 0; i < b * 2; ++i) further[i] = a[i] + 1.5 * (n1[i] - a[i]);
    CHECK(quad_star(a, p, further, n2, cfg).value <= base + 1e-15);

    // Zero exactly when both hinges are inactive for every row.
    const auto A = rows(a), P = rows(p), N1 = rows(n1), N2 = rows(n2);
    bool all_inactive = true;
    for (std::size_t i = 0; i < b; ++i) {
      const double dap = oracle::dist(A[i], P[i], sq);
      if (dap - oracle::dist(A[i], N1[i], sq) + 1.0 > 0 || dap - oracle::dist(A[i], N2[i], sq) + 0.5 > 0) {
        all_inactive = false;
      }
    }
    CHECK((base == 0.0) == all_inactive);
  }
}

TEST_CASE("metric loss gradients match finite differences away from kinks") {
  std::mt19937_64 gen(16);
  int checked = 0;
  for (int t = 0; checked < 40 && t < 400; ++t) {
    const std::size_t b = 1 + gen() % 4, d = 1 + gen() % 4;
    const bool sq = t % 2 == 0;
    Tensor a = random_tensor({b, d}, gen), p = random_tensor({b, d}, gen);
    Tensor n1 = random_tensor({b, d}, gen), n2 = random_tensor({b, d}, gen);
    const double m1 = 1.0, m2 = 0.5;
    if (quad_has_kink(a, p, n1, n2, m1, m2, sq, false) || quad_has_kink(a, p, n1, n2, m1, m2, sq, true)) continue;
    ++checked;
    const QuadLossConfig cfg{0.5, m1, m2, sq};
    std::vector<Tensor*> args{&a, &p, &n1, &n2};

    const auto q = quad_star(a, p, n1, n2, cfg);
    const auto tq = quadruplet_traditional(a, p, n1, n2, m1, m2, sq);
    const auto tr = triplet_loss(a, p, n1, m1, sq);
    for (std::size_t i = 0; i < 4; ++i) {
      const Tensor nq = numeric_gradient(*args[i], [&] { return quad_star(a, p, n1, n2, cfg).value; });
      CHECK(max_gradient_error(q.grads[i], nq) <= kLossGradTol);
      const Tensor nt = numeric_gradient(*args[i], [&] { return quadruplet_traditional(a, p, n1, n2, m1, m2, sq).value; });
      CHECK(max_gradient_error(tq.grads[i], nt) <= kLossGradTol);
      if (i < 3) {
        const Tensor ntr = numeric_gradient(*args[i], [&] { return triplet_loss(a, p, n1, m1, sq).value; });
        CHECK(max_gradient_error(tr.grads[i], ntr) <= kLossGradTol);
      }
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("supcon gradient, scale invariance and degenerate cases") {
  std::mt19937_64 gen(17);
  for (int t = 0; t < 20; ++t) {
    const std::size_t b = 2 + gen() % 6, d = 2 + gen() % 4;
    Tensor z = random_tensor({b, d}, gen);
    const auto labels = random_labels(b, 2, gen);
    const double tau = 0.3;
    const auto out = supcon_loss(z, labels, tau);
    const Tensor num = numeric_gradient(z, [&] { return supcon_loss(z, labels, tau).value; });
    CHECK(max_gradient_error(out.grads[0], num) <= kLossGradTol);

    Tensor scaled = z;
    for (double& v : scaled.storage()) v *= 3.0;
    CHECK(supcon_loss(scaled, labels, tau).value == doctest::Approx(out.value).epsilon(1e-12));
  }
  const Tensor same = mat(2, 2, {1, 1, 2, 2});
  CHECK(supcon_loss(same, std::vector<int>{4, 4}, 0.1).value == doctest::Approx(0.0).scale(1.0));
  // No anchor has a positive: nothing is counted.
  const auto none = supcon_loss(mat(2, 2, {1, 0, 0, 1}), std::vector<int>{0, 1}, 0.1);
  CHECK(none.value == 0.0);
  CHECK_THROWS_AS(supcon_loss(same, std::vector<int>{4, 4}, 0.0), ConfigError);
  CHECK_THROWS_AS(supcon_loss(same, std::vector<int>{4, 4}, -1.0), ConfigError);
  CHECK_THROWS_AS(supcon_loss(mat(1, 2, {1, 1}), std::vector<int>{0}, 0.1), InputError);
}

TEST_CASE("combined loss composition") {
  std::mt19937_64 gen(18);
  for (int t = 0; t < 30; ++t) {
    const std::size_t b = 1 + gen() % 5, d = 1 + gen() % 4, k = 2 + gen() % 4;
    Tensor logits = random_tensor({b, k}, gen);
    const auto labels = random_labels(b, static_cast<int>(k), gen);
    Tensor a = random_tensor({b, d}, gen), p = random_tensor({b, d}, gen);
    Tensor n1 = random_tensor({b, d}, gen), n2 = random_tensor({b, d}, gen);
    const QuadLossConfig cfg{0.5, 1.0, 0.5, true};
    const auto c = combined_loss(logits, labels, a, p, n1, n2, cfg);
    const double ce = cross_entropy(logits, labels).value;
    const double q = quad_star(a, p, n1, n2, cfg).value;
    CHECK(c.value == doctest::Approx(ce + 0.5 * q).epsilon(1e-15));
    CHECK(c.component("ce") == ce);
    CHECK(c.component("quad_star") == q);
    REQUIRE(c.grads.size() == 5);

    const QuadLossConfig zero{0.0, 1.0, 0.5, true};
    const auto z = combined_loss(logits, labels, a, p, n1, n2, zero);
    const auto plain = cross_entropy(logits, labels);
    CHECK(std::memcmp(&z.value, &plain.value, sizeof(double)) == 0);
    CHECK(bitwise_equal(z.grads[0], plain.grads[0]));
    for (std::size_t i = 1; i < 5; ++i)
      for (double v : z.grads[i].values()) CHECK(v == 0.0);
  }
  const Tensor logits({1, 2});
  const Tensor e({2, 2});
  CHECK_THROWS_AS(combined_loss(logits, std::vector<int>{0}, e, e, e, e, {}), InputError);
  CHECK_THROWS_AS(LossOutput{}.component("missing"), InputError);
}
