#include "fedquad/adam.hpp"

#include <cmath>

#include "fedquad/error.hpp"
#include "fedquad/kernels.hpp"

namespace fedquad {

void Adam::begin_step(std::size_t slot_count) {
  if (t_ == 0) {
    m_.assign(slot_count, Tensor());
    v_.assign(slot_count, Tensor());
  } else if (m_.size() != slot_count) {
    throw InputError("adam: parameter count changed between steps");
  }
  ++t_;
}

void Adam::update(std::size_t slot, Tensor& param, const Tensor& grad) {
  if (grad.shape() != param.shape()) {
    throw InputError("adam: gradient " + shape_str(grad.shape()) + " does not match parameter " +
                     shape_str(param.shape()));
  }
  if (m_[slot].empty() && !param.empty()) {
    m_[slot] = Tensor::zeros_like(param);
    v_[slot] = Tensor::zeros_like(param);
  }
  if (m_[slot].shape() != param.shape()) throw InputError("adam: parameter shape changed between steps");
  const double t = static_cast<double>(t_);
  const kernels::AdamCoeffs c{config_.lr,
                              config_.beta1,
                              config_.beta2,
                              config_.eps,
                              config_.weight_decay,
                              1.0 - std::pow(config_.beta1, t),
                              1.0 - std::pow(config_.beta2, t)};
  kernels::active().adam_update(c, param.data(), grad.data(), m_[slot].data(), v_[slot].data(),
                                param.size());
}

void Adam::step(std::span<const ParamSlot> slots) {
  std::size_t trainable = 0;
  for (const auto& s : slots) trainable += s.trainable() ? 1 : 0;
  begin_step(trainable);
  std::size_t k = 0;
  for (const auto& s : slots) {
    if (!s.trainable()) continue;
    update(k++, *s.value, *s.grad);
  }
}

void Adam::step(ModelParams& params, const ModelParams& grads) {
  std::size_t trainable = 0;
  for (const auto& e : params.entries) trainable += e.trainable ? 1 : 0;
  if (grads.entries.size() != trainable) {
    throw InputError("adam: " + std::to_string(grads.entries.size()) + " gradients for " +
                     std::to_string(trainable) + " trainable parameters");
  }
  begin_step(trainable);
  std::size_t k = 0;
  for (auto& e : params.entries) {
    if (!e.trainable) continue;
    if (grads.entries[k].name != e.name) {
      throw InputError("adam: gradient '" + grads.entries[k].name + "' misaligned with '" + e.name + "'");
    }
    update(k, e.value, grads.entries[k].value);
    ++k;
  }
  ++params.step_count;
}

}  // namespace fedquad
