#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fedquad/tensor.hpp"

namespace fedquad {

class Rng;

enum class LayerKind { kConv2d, kBatchNorm2d, kRelu, kMaxPool2x2, kAdaptiveAvgPool, kFlatten, kDense };

std::string_view layer_kind_name(LayerKind kind);

struct ForwardContext {
  bool training = false;
  // Leading-axis batch made of this many equal, independently normalized
  // chunks; batch norm computes statistics per chunk as if each were its own
  // forward call.
  std::size_t segments = 1;
  bool update_running_stats = true;
};

// Non-owning handle to a named parameter or buffer inside a layer.
struct ParamSlot {
  std::string name;
  Tensor* value;
  Tensor* grad;  // nullptr for buffers
  bool trainable() const { return grad != nullptr; }
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, const ForwardContext& ctx) = 0;
  // Overwrites parameter gradients and returns the input gradient. Requires a
  // preceding forward; the cache is consumed.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamSlot>& out) {
    (void)prefix;
    (void)out;
  }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  LayerKind kind() const override { return LayerKind::kDense; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamSlot>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  // He-uniform weights, zero bias.
  void init(Rng& rng);
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  Tensor grad_weight;
  Tensor grad_bias;

 private:
  std::size_t in_;
  std::size_t out_;
  Tensor input_;
  bool cached_ = false;
};

// Square-kernel, stride-1 convolution with symmetric zero padding.
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3,
         std::size_t padding = 1);

  LayerKind kind() const override { return LayerKind::kConv2d; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamSlot>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  void init(Rng& rng);
  std::size_t kernel() const { return kernel_; }
  std::size_t padding() const { return padding_; }
  std::size_t stride() const { return 1; }

  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]
  Tensor grad_weight;
  Tensor grad_bias;

 private:
  // Patch matrix of one sample: [out_h * out_w, in * k * k].
  void im2col(const double* image, std::size_t h, std::size_t w, std::vector<double>& cols) const;
  void col2im(const std::vector<double>& cols, std::size_t h, std::size_t w, double* image) const;

  std::size_t in_;
  std::size_t out_;
  std::size_t kernel_;
  std::size_t padding_;
  Tensor input_;
  bool cached_ = false;
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  LayerKind kind() const override { return LayerKind::kBatchNorm2d; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamSlot>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2d>(*this); }

  std::size_t channels() const { return channels_; }

  Tensor gamma;         // [C]
  Tensor beta;          // [C]
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  Tensor grad_gamma;
  Tensor grad_beta;

 private:
  std::size_t channels_;
  double momentum_;
  double eps_;
  Tensor xhat_;
  std::vector<double> inv_std_;  // [segments * C]
  std::size_t segments_ = 1;
  bool training_cache_ = false;
  bool cached_ = false;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  Tensor input_;
  bool cached_ = false;
};

// 2x2 window, stride 2; odd trailing rows/columns are dropped.
class MaxPool2x2 final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kMaxPool2x2; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2x2>(*this); }

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

// Adaptive average pooling to a 1x1 spatial output: [N,C,H,W] -> [N,C,1,1].
class AdaptiveAvgPool final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kAdaptiveAvgPool; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AdaptiveAvgPool>(*this); }

 private:
  Shape input_shape_;
  bool cached_ = false;
};

class Flatten final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kFlatten; }
  Tensor forward(const Tensor& x, const ForwardContext& ctx) override;
  Tensor backward(const Tensor& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape input_shape_;
  bool cached_ = false;
};

}  // namespace fedquad
