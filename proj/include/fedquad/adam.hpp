#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedquad/layers.hpp"
#include "fedquad/params.hpp"

namespace fedquad {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2: added to the gradient before the moment updates.
  double weight_decay = 1e-5;

  bool operator==(const AdamConfig&) const = default;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Updates every trainable slot from its gradient; buffers are skipped.
  void step(std::span<const ParamSlot> slots);
  // Same update on snapshots; `grads` holds the trainable entries of `params`
  // in order.
  void step(ModelParams& params, const ModelParams& grads);

  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  void update(std::size_t slot, Tensor& param, const Tensor& grad);
  void begin_step(std::size_t slot_count);

  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace fedquad
