#include "fedquad/model.hpp"

#include <cstring>

#include "fedquad/error.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {

const ParamEntry* ModelParams::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ModelParams::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.value.size();
  return n;
}

bool ModelParams::same_layout(const ModelParams& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name != other.entries[i].name ||
        entries[i].value.shape() != other.entries[i].value.shape()) {
      return false;
    }
  }
  return true;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (!bitwise_equal(a.entries[i].value, b.entries[i].value)) return false;
  }
  return true;
}

EncoderModel::EncoderModel(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (spec_.embedding_dim < 1) throw ConfigError("model: embedding_dim must be >= 1");
  Rng rng(seed);
  if (spec_.kind == ModelKind::kCnn) {
    if (spec_.input_shape.size() != 3) {
      throw ConfigError("cnn expects a {C,H,W} input, got " + shape_str(spec_.input_shape));
    }
    if (spec_.conv_channels.size() != 3) throw ConfigError("cnn needs exactly three conv widths");
    std::size_t channels = spec_.input_shape[0];
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string block = "block" + std::to_string(b + 1);
      auto conv = std::make_unique<Conv2d>(channels, spec_.conv_channels[b], 3, 1);
      conv->init(rng);
      layers_.push_back({block + ".conv", std::move(conv)});
      layers_.push_back({block + ".bn", std::make_unique<BatchNorm2d>(spec_.conv_channels[b])});
      layers_.push_back({block + ".relu", std::make_unique<Relu>()});
      if (b < 2) {
        layers_.push_back({block + ".pool", std::make_unique<MaxPool2x2>()});
      } else {
        layers_.push_back({block + ".avgpool", std::make_unique<AdaptiveAvgPool>()});
      }
      channels = spec_.conv_channels[b];
    }
    layers_.push_back({"flatten", std::make_unique<Flatten>()});
    auto embed = std::make_unique<Dense>(channels, spec_.embedding_dim);
    embed->init(rng);
    layers_.push_back({"embed", std::move(embed)});
  } else {
    if (spec_.input_shape.size() != 1 || spec_.input_shape[0] < 1) {
      throw ConfigError("mlp expects a {D} input, got " + shape_str(spec_.input_shape));
    }
    std::size_t width = spec_.input_shape[0];
    for (std::size_t i = 0; i < spec_.hidden_dims.size(); ++i) {
      if (spec_.hidden_dims[i] < 1) throw ConfigError("mlp: hidden dims must be >= 1");
      auto fc = std::make_unique<Dense>(width, spec_.hidden_dims[i]);
      fc->init(rng);
      layers_.push_back({"fc" + std::to_string(i + 1), std::move(fc)});
      layers_.push_back({"relu" + std::to_string(i + 1), std::make_unique<Relu>()});
      width = spec_.hidden_dims[i];
    }
    auto embed = std::make_unique<Dense>(width, spec_.embedding_dim);
    embed->init(rng);
    layers_.push_back({"embed", std::move(embed)});
  }
  head_ = std::make_unique<Dense>(spec_.embedding_dim, spec_.num_classes);
  head_->init(rng);
}

EncoderModel::EncoderModel(const EncoderModel& other) : spec_(other.spec_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back({l.name, l.layer->clone()});
  head_ = std::make_unique<Dense>(*other.head_);
}

EncoderModel& EncoderModel::operator=(const EncoderModel& other) {
  if (this != &other) {
    EncoderModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t EncoderModel::feature_width() const {
  return static_cast<const Dense&>(*layers_.back().layer).in_features();
}

ForwardResult EncoderModel::forward(const Tensor& batch, const ForwardContext& ctx) {
  const Shape& s = batch.shape();
  if (s.size() != spec_.input_shape.size() + 1 || s[0] == 0 ||
      !std::equal(spec_.input_shape.begin(), spec_.input_shape.end(), s.begin() + 1)) {
    throw ConfigError("model input " + shape_str(s) + " does not match [B]+" +
                      shape_str(spec_.input_shape));
  }
  Tensor h = batch;
  for (auto& l : layers_) {
    h = l.layer->forward(h, ctx);
    if (!h.all_finite()) throw NumericError("non-finite activation after layer '" + l.name + "'");
  }
  ForwardResult out;
  out.logits = head_->forward(h, ctx);
  if (!out.logits.all_finite()) throw NumericError("non-finite activation after layer 'head'");
  out.embeddings = std::move(h);
  has_forward_ = ctx.training;
  return out;
}

void EncoderModel::backward(const Tensor& grad_embeddings, const Tensor& grad_logits) {
  if (!has_forward_) throw StateError("model backward called without a training forward pass");
  Tensor g = head_->backward(grad_logits);
  if (grad_embeddings.shape() != g.shape()) {
    throw InputError("embedding gradient " + shape_str(grad_embeddings.shape()) +
                     " does not match embeddings " + shape_str(g.shape()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_embeddings[i];
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->layer->backward(g);
  has_forward_ = false;
}

std::vector<ParamSlot> EncoderModel::slots() {
  std::vector<ParamSlot> out;
  for (auto& l : layers_) l.layer->collect(l.name, out);
  head_->collect("head", out);
  return out;
}

std::vector<ParamSlot> EncoderModel::slots_const() const {
  return const_cast<EncoderModel*>(this)->slots();
}

ModelParams EncoderModel::gradients() const {
  ModelParams g;
  for (const auto& s : slots_const()) {
    if (s.trainable()) g.entries.push_back({s.name, *s.grad, true});
  }
  return g;
}

ModelParams EncoderModel::params() const {
  ModelParams p;
  for (const auto& s : slots_const()) p.entries.push_back({s.name, *s.value, s.trainable()});
  return p;
}

void EncoderModel::load(const ModelParams& params) {
  auto own = slots();
  if (own.size() != params.entries.size()) {
    throw InputError("parameter count mismatch: model has " + std::to_string(own.size()) +
                     " entries, snapshot has " + std::to_string(params.entries.size()));
  }
  for (std::size_t i = 0; i < own.size(); ++i) {
    const auto& e = params.entries[i];
    if (e.name != own[i].name || e.value.shape() != own[i].value->shape()) {
      throw InputError("parameter '" + e.name + "' " + shape_str(e.value.shape()) +
                       " does not match model entry '" + own[i].name + "' " +
                       shape_str(own[i].value->shape()));
    }
  }
  for (std::size_t i = 0; i < own.size(); ++i) *own[i].value = params.entries[i].value;
}

EncoderModel build_cnn_encoder(std::size_t num_classes, std::uint64_t seed,
                                 std::size_t embedding_dim, Shape input_shape) {
  ModelSpec spec;
  spec.kind = ModelKind::kCnn;
  spec.input_shape = std::move(input_shape);
  spec.embedding_dim = embedding_dim;
  spec.num_classes = num_classes;
  return EncoderModel(std::move(spec), seed);
}

EncoderModel build_mlp_encoder(std::size_t input_dim, const std::vector<std::size_t>& hidden_dims,
                               std::size_t embedding_dim, std::size_t num_classes,
                               std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::kMlp;
  spec.input_shape = {input_dim};
  spec.hidden_dims = hidden_dims;
  spec.embedding_dim = embedding_dim;
  spec.num_classes = num_classes;
  return EncoderModel(std::move(spec), seed);
}

}  // namespace fedquad
