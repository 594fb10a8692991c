#include "fedquad/losses.hpp"

#include <algorithm>
#include <cmath>

#include "fedquad/error.hpp"
#include "fedquad/kernels.hpp"

namespace fedquad {
namespace {

void require_aligned(std::string_view loss, std::initializer_list<const Tensor*> ts) {
  const Tensor& first = **ts.begin();
  if (first.rank() != 2) {
    throw InputError(std::string(loss) + ": embeddings must be [B,D], got " + shape_str(first.shape()));
  }
  for (const Tensor* t : ts) {
    if (t->shape() != first.shape()) {
      throw InputError(std::string(loss) + ": shape mismatch " + shape_str(first.shape()) + " vs " +
                       shape_str(t->shape()));
    }
  }
}

// Distance between rows and its gradient scale: d/da d(a,b) = scale * (a - b).
struct Dist {
  double value;
  double scale;
};

Dist distance(const double* a, const double* b, std::size_t n, bool squared) {
  const double sq = kernels::squared_distance(a, b, n);
  if (squared) return {sq, 2.0};
  const double d = std::sqrt(sq);
  return {d, d > 0.0 ? 1.0 / d : 0.0};
}

// grad_a += w * scale * (a - b); grad_b -= w * scale * (a - b)
void accumulate_pair(double w, const Dist& d, const double* a, const double* b, double* ga,
                     double* gb, std::size_t n) {
  const double c = w * d.scale;
  if (c == 0.0) return;
  kernels::axpy(c, a, ga, n);
  kernels::axpy(-c, b, ga, n);
  kernels::axpy(-c, a, gb, n);
  kernels::axpy(c, b, gb, n);
}

}  // namespace

double LossOutput::component(std::string_view name) const {
  for (const auto& [k, v] : components) {
    if (k == name) return v;
  }
  throw InputError("loss has no component '" + std::string(name) + "'");
}

LossOutput cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) == 0) {
    throw InputError("cross_entropy: logits must be [B,K] with B >= 1, got " + shape_str(logits.shape()));
  }
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) {
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(b));
  }
  LossOutput out;
  Tensor grad(logits.shape());
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw InputError("cross_entropy: label " + std::to_string(y) + " out of range [0," +
                       std::to_string(k) + ")");
    }
    const double* row = logits.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double log_z = mx + std::log(sum);
    total += log_z - row[y];
    double* g = grad.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(row[j] - log_z) * inv_b;
    g[y] -= inv_b;
  }
  out.value = total * inv_b;
  out.grads.push_back(std::move(grad));
  out.components.emplace_back("ce", out.value);
  return out;
}

LossOutput quad_star(const Tensor& za, const Tensor& zp, const Tensor& zn1, const Tensor& zn2,
                     const QuadLossConfig& cfg) {
  require_aligned("quad_star", {&za, &zp, &zn1, &zn2});
  const std::size_t b = za.dim(0), d = za.dim(1);
  LossOutput out;
  Tensor ga(za.shape()), gp(za.shape()), gn1(za.shape()), gn2(za.shape());
  const double w = b ? 1.0 / static_cast<double>(b) : 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* a = za.data() + i * d;
    const double* p = zp.data() + i * d;
    const double* n1 = zn1.data() + i * d;
    const double* n2 = zn2.data() + i * d;
    const Dist dap = distance(a, p, d, cfg.squared_distance);
    const Dist dan1 = distance(a, n1, d, cfg.squared_distance);
    const Dist dan2 = distance(a, n2, d, cfg.squared_distance);
    const double h1 = dap.value - dan1.value + cfg.m1;
    const double h2 = dap.value - dan2.value + cfg.m2;
    const bool on1 = h1 > 0.0;
    const bool on2 = h2 > 0.0;
    total += (on1 ? h1 : 0.0) + (on2 ? h2 : 0.0);
    const double pull = w * ((on1 ? 1.0 : 0.0) + (on2 ? 1.0 : 0.0));
    accumulate_pair(pull, dap, a, p, ga.data() + i * d, gp.data() + i * d, d);
    if (on1) accumulate_pair(-w, dan1, a, n1, ga.data() + i * d, gn1.data() + i * d, d);
    if (on2) accumulate_pair(-w, dan2, a, n2, ga.data() + i * d, gn2.data() + i * d, d);
  }
  out.value = total * w;
  out.grads = {std::move(ga), std::move(gp), std::move(gn1), std::move(gn2)};
  out.components.emplace_back("quad_star", out.value);
  return out;
}

LossOutput combined_loss(const Tensor& logits, std::span<const int> labels, const Tensor& za,
                         const Tensor& zp, const Tensor& zn1, const Tensor& zn2,
                         const QuadLossConfig& cfg) {
  LossOutput ce = cross_entropy(logits, labels);
  LossOutput quad = quad_star(za, zp, zn1, zn2, cfg);
  if (za.dim(0) != logits.dim(0)) {
    throw InputError("combined_loss: " + std::to_string(logits.dim(0)) + " logits rows vs " +
                     std::to_string(za.dim(0)) + " anchors");
  }
  LossOutput out;
  out.value = ce.value + cfg.beta * quad.value;
  out.grads.push_back(std::move(ce.grads[0]));
  for (auto& g : quad.grads) {
    for (auto& x : g.storage()) x *= cfg.beta;
    out.grads.push_back(std::move(g));
  }
  out.components = {{"ce", ce.value}, {"quad_star", quad.value}};
  return out;
}

LossOutput triplet_loss(const Tensor& za, const Tensor& zp, const Tensor& zn, double margin,
                        bool squared_distance) {
  require_aligned("triplet_loss", {&za, &zp, &zn});
  const std::size_t b = za.dim(0), d = za.dim(1);
  LossOutput out;
  Tensor ga(za.shape()), gp(za.shape()), gn(za.shape());
  const double w = b ? 1.0 / static_cast<double>(b) : 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* a = za.data() + i * d;
    const double* p = zp.data() + i * d;
    const double* n = zn.data() + i * d;
    const Dist dap = distance(a, p, d, squared_distance);
    const Dist dan = distance(a, n, d, squared_distance);
    const double h = dap.value - dan.value + margin;
    if (h <= 0.0) continue;
    total += h;
    accumulate_pair(w, dap, a, p, ga.data() + i * d, gp.data() + i * d, d);
    accumulate_pair(-w, dan, a, n, ga.data() + i * d, gn.data() + i * d, d);
  }
  out.value = total * w;
  out.grads = {std::move(ga), std::move(gp), std::move(gn)};
  out.components.emplace_back("triplet", out.value);
  return out;
}

LossOutput quadruplet_traditional(const Tensor& za, const Tensor& zp, const Tensor& zn1,
                                  const Tensor& zn2, double m1, double m2,
                                  bool squared_distance) {
  require_aligned("quadruplet_traditional", {&za, &zp, &zn1, &zn2});
  const std::size_t b = za.dim(0), d = za.dim(1);
  LossOutput out;
  Tensor ga(za.shape()), gp(za.shape()), gn1(za.shape()), gn2(za.shape());
  const double w = b ? 1.0 / static_cast<double>(b) : 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* a = za.data() + i * d;
    const double* p = zp.data() + i * d;
    const double* n1 = zn1.data() + i * d;
    const double* n2 = zn2.data() + i * d;
    const Dist dap = distance(a, p, d, squared_distance);
    const Dist dan1 = distance(a, n1, d, squared_distance);
    const Dist dnn = distance(n1, n2, d, squared_distance);
    const double h1 = dap.value - dan1.value + m1;
    const double h2 = dap.value - dnn.value + m2;
    const bool on1 = h1 > 0.0;
    const bool on2 = h2 > 0.0;
    total += (on1 ? h1 : 0.0) + (on2 ? h2 : 0.0);
    const double pull = w * ((on1 ? 1.0 : 0.0) + (on2 ? 1.0 : 0.0));
    accumulate_pair(pull, dap, a, p, ga.data() + i * d, gp.data() + i * d, d);
    if (on1) accumulate_pair(-w, dan1, a, n1, ga.data() + i * d, gn1.data() + i * d, d);
    if (on2) accumulate_pair(-w, dnn, n1, n2, gn1.data() + i * d, gn2.data() + i * d, d);
  }
  out.value = total * w;
  out.grads = {std::move(ga), std::move(gp), std::move(gn1), std::move(gn2)};
  out.components.emplace_back("quadruplet", out.value);
  return out;
}

LossOutput supcon_loss(const Tensor& z, std::span<const int> labels, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("supcon_loss: temperature must be > 0");
  if (z.rank() != 2 || z.dim(0) < 2) {
    throw InputError("supcon_loss: need [B,D] with B >= 2, got " + shape_str(z.shape()));
  }
  const std::size_t b = z.dim(0), d = z.dim(1);
  if (labels.size() != b) throw InputError("supcon_loss: label count does not match batch");

  std::vector<double> norms(b);
  Tensor u(z.shape());
  for (std::size_t i = 0; i < b; ++i) {
    const double* zi = z.data() + i * d;
    norms[i] = std::max(std::sqrt(kernels::dot(zi, zi, d)), 1e-12);
    for (std::size_t j = 0; j < d; ++j) u[i * d + j] = zi[j] / norms[i];
  }
  std::vector<double> sim(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < b; ++k) {
      sim[i * b + k] = kernels::dot(u.data() + i * d, u.data() + k * d, d) / temperature;
    }
  }

  std::size_t anchors = 0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < b; ++k) {
      if (k != i && labels[k] == labels[i]) {
        ++anchors;
        break;
      }
    }
  }

  LossOutput out;
  Tensor grad(z.shape());
  out.components.emplace_back("supcon", 0.0);
  if (anchors == 0) {
    out.grads.push_back(std::move(grad));
    return out;
  }
  const double inv_anchors = 1.0 / static_cast<double>(anchors);
  // dL/dsim
  std::vector<double> gsim(b * b, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t positives = 0;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < b; ++k) {
      if (k == i) continue;
      mx = std::max(mx, sim[i * b + k]);
      if (labels[k] == labels[i]) ++positives;
    }
    if (positives == 0) continue;
    double sum = 0.0;
    for (std::size_t k = 0; k < b; ++k) {
      if (k != i) sum += std::exp(sim[i * b + k] - mx);
    }
    const double log_z = mx + std::log(sum);
    const double inv_pos = 1.0 / static_cast<double>(positives);
    double li = 0.0;
    for (std::size_t k = 0; k < b; ++k) {
      if (k == i) continue;
      const bool pos = labels[k] == labels[i];
      if (pos) li -= (sim[i * b + k] - log_z) * inv_pos;
      gsim[i * b + k] = inv_anchors * (std::exp(sim[i * b + k] - log_z) - (pos ? inv_pos : 0.0));
    }
    total += li;
  }
  out.value = total * inv_anchors;
  out.components[0].second = out.value;

  Tensor gu(z.shape());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t k = 0; k < b; ++k) {
      const double g = gsim[i * b + k] / temperature;
      if (g == 0.0) continue;
      kernels::axpy(g, u.data() + k * d, gu.data() + i * d, d);
      kernels::axpy(g, u.data() + i * d, gu.data() + k * d, d);
    }
  }
  for (std::size_t i = 0; i < b; ++i) {
    const double* ui = u.data() + i * d;
    const double* gui = gu.data() + i * d;
    const double proj = kernels::dot(ui, gui, d);
    for (std::size_t j = 0; j < d; ++j) grad[i * d + j] = (gui[j] - ui[j] * proj) / norms[i];
  }
  out.grads.push_back(std::move(grad));
  return out;
}

}  // namespace fedquad
