#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fedquad/layers.hpp"
#include "loss_oracles.hpp"
#include "support.hpp"

namespace fedquad::test {

inline double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

// Checks input and parameter gradients of L = sum(layer(x) * r).
inline double check_layer(Layer& layer, Tensor x, const ForwardContext& ctx, std::mt19937_64& gen) {
  ForwardContext quiet = ctx;
  quiet.update_running_stats = false;
  const Tensor y = layer.forward(x, quiet);
  const Tensor r = random_tensor(y.shape(), gen);
  const Tensor gx = layer.backward(r);
  std::vector<ParamSlot> slots;
  layer.collect("l", slots);
  std::vector<Tensor> analytic;
  for (const auto& s : slots) {
    if (s.trainable()) analytic.push_back(*s.grad);
  }
  auto loss = [&] { return weighted_sum(layer.forward(x, quiet), r); };
  double worst = max_gradient_error(gx, numeric_gradient(x, loss));
  std::size_t k = 0;
  for (const auto& s : slots) {
    if (!s.trainable()) continue;
    worst = std::max(worst, max_gradient_error(analytic[k++], numeric_gradient(*s.value, loss)));
  }
  return worst;
}

// Values bounded away from zero so ReLU kinks are not probed.
inline Tensor away_from_zero(Tensor t) {
  for (double& v : t.storage()) v = v >= 0 ? v + 0.05 : v - 0.05;
  return t;
}

// Distinct values per pooling window so the argmax is stable under +-h.
inline Tensor distinct_values(Shape shape, std::mt19937_64& gen) {
  Tensor t(std::move(shape));
  std::vector<double> vals(t.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
  std::shuffle(vals.begin(), vals.end(), gen);
  t.storage() = vals;
  return t;
}

inline oracle::Rows rows(const Tensor& t) {
  oracle::Rows out(t.dim(0));
  for (std::size_t i = 0; i < t.dim(0); ++i) out[i].assign(t.row(i).begin(), t.row(i).end());
  return out;
}

// A hinge argument this close to zero is treated as a kink for gradient checks.
inline bool near_kink(double x) { return std::abs(x) < 1e-3; }

inline bool quad_has_kink(const Tensor& a, const Tensor& p, const Tensor& n1, const Tensor& n2, double m1, double m2,
                   bool sq, bool traditional) {
  const auto A = rows(a), P = rows(p), N1 = rows(n1), N2 = rows(n2);
  for (std::size_t i = 0; i < A.size(); ++i) {
    const double dap = oracle::dist(A[i], P[i], sq);
    const double second = traditional ? oracle::dist(N1[i], N2[i], sq) : oracle::dist(A[i], N2[i], sq);
    if (near_kink(dap - oracle::dist(A[i], N1[i], sq) + m1) || near_kink(dap - second + m2)) return true;
    if (!sq && (oracle::dist(A[i], P[i], false) < 1e-3 || oracle::dist(A[i], N1[i], false) < 1e-3)) return true;
  }
  return false;
}

}  // namespace fedquad::test
