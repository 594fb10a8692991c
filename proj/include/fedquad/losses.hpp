#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedquad/tensor.hpp"

namespace fedquad {

struct QuadLossConfig {
  double beta = 0.5;
  double m1 = 1.0;
  double m2 = 0.5;
  // true: squared Euclidean distance between embeddings; false: plain norm.
  bool squared_distance = true;

  bool operator==(const QuadLossConfig&) const = default;
};

struct LossOutput {
  double value = 0.0;
  // One gradient per tensor argument, in argument order.
  std::vector<Tensor> grads;
  // Named partial values, e.g. {"ce", 2.0}, {"quad_star", 0.5}.
  std::vector<std::pair<std::string, double>> components;

  double component(std::string_view name) const;
};

// Mean negative log-softmax of the true class over a [B,K] batch.
LossOutput cross_entropy(const Tensor& logits, std::span<const int> labels);

// Batch mean of [d(a,p) - d(a,n1) + m1]_+ + [d(a,p) - d(a,n2) + m2]_+.
// The hinge subgradient at zero is zero.
LossOutput quad_star(const Tensor& za, const Tensor& zp, const Tensor& zn1, const Tensor& zn2,
                     const QuadLossConfig& cfg);

// ce + beta * quad_star. Gradients: {logits, za, zp, zn1, zn2}.
LossOutput combined_loss(const Tensor& logits, std::span<const int> labels, const Tensor& za,
                         const Tensor& zp, const Tensor& zn1, const Tensor& zn2,
                         const QuadLossConfig& cfg);

// Batch mean of [d(a,p) - d(a,n) + margin]_+.
LossOutput triplet_loss(const Tensor& za, const Tensor& zp, const Tensor& zn, double margin,
                        bool squared_distance = true);

// Batch mean of [d(a,p) - d(a,n1) + m1]_+ + [d(a,p) - d(n1,n2) + m2]_+; the
// second hinge compares against the distance between the two negatives.
LossOutput quadruplet_traditional(const Tensor& za, const Tensor& zp, const Tensor& zn1,
                                  const Tensor& zn2, double m1, double m2,
                                  bool squared_distance = true);

// Supervised contrastive loss on internally L2-normalized rows. Anchors with
// no same-label partner are skipped; the value is the mean over the rest.
LossOutput supcon_loss(const Tensor& z, std::span<const int> labels, double temperature);

}  // namespace fedquad
