#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fedquad/layers.hpp"
#include "fedquad/params.hpp"

namespace fedquad {

enum class ModelKind { kCnn, kMlp };

struct ModelSpec {
  ModelKind kind = ModelKind::kMlp;
  // Per-sample input extents: {C, H, W} for the CNN, {D} for the MLP.
  Shape input_shape;
  std::vector<std::size_t> hidden_dims;                  // MLP only
  std::vector<std::size_t> conv_channels{64, 128, 256};  // CNN only
  std::size_t embedding_dim = 128;
  std::size_t num_classes = 10;
};

struct ForwardResult {
  Tensor embeddings;  // [B, embedding_dim], not length-normalized
  Tensor logits;      // [B, num_classes]
};

// Encoder stack producing embeddings, followed by a dense classification head
// applied to those embeddings.
class EncoderModel {
 public:
  EncoderModel(ModelSpec spec, std::uint64_t seed);
  EncoderModel(const EncoderModel& other);
  EncoderModel& operator=(const EncoderModel& other);
  EncoderModel(EncoderModel&&) noexcept = default;
  EncoderModel& operator=(EncoderModel&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  std::size_t embedding_dim() const { return spec_.embedding_dim; }
  std::size_t num_classes() const { return spec_.num_classes; }
  // Width of the flattened feature entering the embedding layer.
  std::size_t feature_width() const;

  // Throws ConfigError on an input shape mismatch and NumericError naming the
  // layer when an activation turns non-finite.
  ForwardResult forward(const Tensor& batch, const ForwardContext& ctx);
  ForwardResult forward(const Tensor& batch, bool training) {
    ForwardContext ctx;
    ctx.training = training;
    return forward(batch, ctx);
  }

  // Reverse pass after a training forward. The embedding gradient is added to
  // the gradient flowing back from the head. Results land in the trainable
  // slots; gradients() copies them out.
  void backward(const Tensor& grad_embeddings, const Tensor& grad_logits);
  ModelParams gradients() const;

  ModelParams params() const;
  // Names, order and shapes must match this architecture.
  void load(const ModelParams& params);

  std::vector<ParamSlot> slots();
  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i].layer; }
  const std::string& layer_name(std::size_t i) const { return layers_[i].name; }

 private:
  struct NamedLayer {
    std::string name;
    std::unique_ptr<Layer> layer;
  };

  std::vector<ParamSlot> slots_const() const;

  ModelSpec spec_;
  std::vector<NamedLayer> layers_;  // encoder, ending with the embedding dense layer
  std::unique_ptr<Dense> head_;
  bool has_forward_ = false;
};

// Three conv blocks (3x3, stride 1, padding 1, batch norm, ReLU); the first
// two end in 2x2 max pooling, the third in adaptive average pooling to 1x1.
// The flattened feature passes a dense layer to the embedding.
EncoderModel build_cnn_encoder(std::size_t num_classes, std::uint64_t seed,
                                 std::size_t embedding_dim = 128, Shape input_shape = {3, 32, 32});

// Dense/ReLU stack ending in a linear embedding layer.
EncoderModel build_mlp_encoder(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                               std::size_t embedding_dim, std::size_t num_classes,
                               std::uint64_t seed);

}  // namespace fedquad
