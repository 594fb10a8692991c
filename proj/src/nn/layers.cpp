#include "fedquad/layers.hpp"

#include <cmath>
#include <limits>

#include "fedquad/error.hpp"
#include "fedquad/kernels.hpp"
#include "fedquad/rng.hpp"

namespace fedquad {
namespace {

void require_rank(const Tensor& x, std::size_t rank, std::string_view layer) {
  if (x.rank() != rank) {
    throw InputError(std::string(layer) + ": expected rank-" + std::to_string(rank) +
                     " input, got " + shape_str(x.shape()));
  }
}

void require_cache(bool cached, std::string_view layer) {
  if (!cached) throw StateError(std::string(layer) + ": backward called without a forward pass");
}

void require_same_shape(const Tensor& g, const Shape& expected, std::string_view layer) {
  if (g.shape() != expected) {
    throw InputError(std::string(layer) + ": upstream gradient " + shape_str(g.shape()) +
                     " does not match output " + shape_str(expected));
  }
}

void he_uniform(Tensor& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& x : w.storage()) x = rng.uniform(-bound, bound);
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d:
      return "conv2d";
    case LayerKind::kBatchNorm2d:
      return "batchnorm2d";
    case LayerKind::kRelu:
      return "relu";
    case LayerKind::kMaxPool2x2:
      return "maxpool2x2";
    case LayerKind::kAdaptiveAvgPool:
      return "adaptiveavgpool";
    case LayerKind::kFlatten:
      return "flatten";
    case LayerKind::kDense:
      return "dense";
  }
  return "unknown";
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}),
      bias({out_features}),
      grad_weight({out_features, in_features}),
      grad_bias({out_features}),
      in_(in_features),
      out_(out_features) {}

void Dense::init(Rng& rng) {
  he_uniform(weight, in_, rng);
  bias.fill(0.0);
}

Tensor Dense::forward(const Tensor& x, const ForwardContext& ctx) {
  require_rank(x, 2, "dense");
  if (x.dim(1) != in_) {
    throw InputError("dense: expected " + std::to_string(in_) + " input features, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * in_;
    double* yi = y.data() + i * out_;
    for (std::size_t o = 0; o < out_; ++o) yi[o] = k.dot(xi, weight.data() + o * in_, in_) + bias[o];
  }
  if (ctx.training) {
    input_ = x;
    cached_ = true;
  }
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  require_cache(cached_, "dense");
  const std::size_t n = input_.dim(0);
  require_same_shape(grad_out, {n, out_}, "dense");
  grad_weight.fill(0.0);
  grad_bias.fill(0.0);
  Tensor gx({n, in_});
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = input_.data() + i * in_;
    const double* gi = grad_out.data() + i * out_;
    double* gxi = gx.data() + i * in_;
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = gi[o];
      if (g == 0.0) continue;
      k.axpy(g, xi, grad_weight.data() + o * in_, in_);
      k.axpy(g, weight.data() + o * in_, gxi, in_);
      grad_bias[o] += g;
    }
  }
  cached_ = false;
  input_ = Tensor();
  return gx;
}

void Dense::collect(const std::string& prefix, std::vector<ParamSlot>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t padding)
    : weight({out_channels, in_channels, kernel, kernel}),
      bias({out_channels}),
      grad_weight({out_channels, in_channels, kernel, kernel}),
      grad_bias({out_channels}),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      padding_(padding) {}

void Conv2d::init(Rng& rng) {
  he_uniform(weight, in_ * kernel_ * kernel_, rng);
  bias.fill(0.0);
}

void Conv2d::im2col(const double* image, std::size_t h, std::size_t w,
                    std::vector<double>& cols) const {
  const std::size_t oh = h + 2 * padding_ - kernel_ + 1;
  const std::size_t ow = w + 2 * padding_ - kernel_ + 1;
  const std::size_t patch = in_ * kernel_ * kernel_;
  cols.assign(oh * ow * patch, 0.0);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* col = cols.data() + (oy * ow + ox) * patch;
      for (std::size_t c = 0; c < in_; ++c) {
        for (std::size_t ky = 0; ky < kernel_; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(padding_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kernel_; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(padding_);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            col[(c * kernel_ + ky) * kernel_ + kx] = image[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const std::vector<double>& cols, std::size_t h, std::size_t w,
                    double* image) const {
  const std::size_t oh = h + 2 * padding_ - kernel_ + 1;
  const std::size_t ow = w + 2 * padding_ - kernel_ + 1;
  const std::size_t patch = in_ * kernel_ * kernel_;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const double* col = cols.data() + (oy * ow + ox) * patch;
      for (std::size_t c = 0; c < in_; ++c) {
        for (std::size_t ky = 0; ky < kernel_; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(padding_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kernel_; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(padding_);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            image[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += col[(c * kernel_ + ky) * kernel_ + kx];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, const ForwardContext& ctx) {
  require_rank(x, 4, "conv2d");
  if (x.dim(1) != in_) {
    throw InputError("conv2d: expected " + std::to_string(in_) + " input channels, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (h + 2 * padding_ < kernel_ || w + 2 * padding_ < kernel_) {
    throw InputError("conv2d: input " + shape_str(x.shape()) + " smaller than kernel");
  }
  const std::size_t oh = h + 2 * padding_ - kernel_ + 1;
  const std::size_t ow = w + 2 * padding_ - kernel_ + 1;
  const std::size_t patch = in_ * kernel_ * kernel_;
  const std::size_t pixels = oh * ow;
  Tensor y({n, out_, oh, ow});
  const auto& k = kernels::active();
  std::vector<double> cols;
  for (std::size_t s = 0; s < n; ++s) {
    im2col(x.data() + s * in_ * h * w, h, w, cols);
    double* ys = y.data() + s * out_ * pixels;
    for (std::size_t co = 0; co < out_; ++co) {
      const double* wk = weight.data() + co * patch;
      for (std::size_t p = 0; p < pixels; ++p) {
        ys[co * pixels + p] = k.dot(wk, cols.data() + p * patch, patch) + bias[co];
      }
    }
  }
  if (ctx.training) {
    input_ = x;
    cached_ = true;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  require_cache(cached_, "conv2d");
  const std::size_t n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t oh = h + 2 * padding_ - kernel_ + 1;
  const std::size_t ow = w + 2 * padding_ - kernel_ + 1;
  require_same_shape(grad_out, {n, out_, oh, ow}, "conv2d");
  const std::size_t patch = in_ * kernel_ * kernel_;
  const std::size_t pixels = oh * ow;
  grad_weight.fill(0.0);
  grad_bias.fill(0.0);
  Tensor gx(input_.shape());
  const auto& k = kernels::active();
  std::vector<double> cols;
  std::vector<double> gcols;
  for (std::size_t s = 0; s < n; ++s) {
    im2col(input_.data() + s * in_ * h * w, h, w, cols);
    gcols.assign(cols.size(), 0.0);
    const double* gs = grad_out.data() + s * out_ * pixels;
    for (std::size_t co = 0; co < out_; ++co) {
      double* gw = grad_weight.data() + co * patch;
      const double* wk = weight.data() + co * patch;
      for (std::size_t p = 0; p < pixels; ++p) {
        const double g = gs[co * pixels + p];
        if (g == 0.0) continue;
        k.axpy(g, cols.data() + p * patch, gw, patch);
        k.axpy(g, wk, gcols.data() + p * patch, patch);
        grad_bias[co] += g;
      }
    }
    col2im(gcols, h, w, gx.data() + s * in_ * h * w);
  }
  cached_ = false;
  input_ = Tensor();
  return gx;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamSlot>& out) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, double momentum, double eps)
    : gamma({channels}, 1.0),
      beta({channels}, 0.0),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      grad_gamma({channels}),
      grad_beta({channels}),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {}

Tensor BatchNorm2d::forward(const Tensor& x, const ForwardContext& ctx) {
  require_rank(x, 4, "batchnorm2d");
  if (x.dim(1) != channels_) {
    throw InputError("batchnorm2d: expected " + std::to_string(channels_) + " channels, got " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t hw = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  if (!ctx.training) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(running_var[c] + eps_);
        const double* xs = x.data() + (s * channels_ + c) * hw;
        double* ys = y.data() + (s * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) ys[i] = gamma[c] * (xs[i] - running_mean[c]) * inv + beta[c];
      }
    }
    cached_ = false;
    return y;
  }

  const std::size_t segments = ctx.segments == 0 ? 1 : ctx.segments;
  if (n % segments != 0) {
    throw InputError("batchnorm2d: batch of " + std::to_string(n) + " not divisible into " +
                     std::to_string(segments) + " segments");
  }
  const std::size_t per_segment = n / segments;
  const double count = static_cast<double>(per_segment * hw);
  xhat_ = Tensor(x.shape());
  inv_std_.assign(segments * channels_, 0.0);
  segments_ = segments;
  for (std::size_t seg = 0; seg < segments; ++seg) {
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum = 0.0;
      for (std::size_t s = seg * per_segment; s < (seg + 1) * per_segment; ++s) {
        const double* xs = x.data() + (s * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sum += xs[i];
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (std::size_t s = seg * per_segment; s < (seg + 1) * per_segment; ++s) {
        const double* xs = x.data() + (s * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (xs[i] - mean) * (xs[i] - mean);
      }
      const double var = sq / count;
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[seg * channels_ + c] = inv;
      for (std::size_t s = seg * per_segment; s < (seg + 1) * per_segment; ++s) {
        const std::size_t off = (s * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xh = (x[off + i] - mean) * inv;
          xhat_[off + i] = xh;
          y[off + i] = gamma[c] * xh + beta[c];
        }
      }
      if (ctx.update_running_stats) {
        const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
        running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * mean;
        running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * unbiased;
      }
    }
  }
  cached_ = true;
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  require_cache(cached_, "batchnorm2d");
  require_same_shape(grad_out, xhat_.shape(), "batchnorm2d");
  const std::size_t n = xhat_.dim(0);
  const std::size_t hw = xhat_.dim(2) * xhat_.dim(3);
  const std::size_t per_segment = n / segments_;
  const double count = static_cast<double>(per_segment * hw);
  grad_gamma.fill(0.0);
  grad_beta.fill(0.0);
  Tensor gx(xhat_.shape());
  for (std::size_t seg = 0; seg < segments_; ++seg) {
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (std::size_t s = seg * per_segment; s < (seg + 1) * per_segment; ++s) {
        const std::size_t off = (s * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += grad_out[off + i];
          sum_dy_xhat += grad_out[off + i] * xhat_[off + i];
        }
      }
      grad_gamma[c] += sum_dy_xhat;
      grad_beta[c] += sum_dy;
      const double scale = gamma[c] * inv_std_[seg * channels_ + c] / count;
      for (std::size_t s = seg * per_segment; s < (seg + 1) * per_segment; ++s) {
        const std::size_t off = (s * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          gx[off + i] = scale * (count * grad_out[off + i] - sum_dy - xhat_[off + i] * sum_dy_xhat);
        }
      }
    }
  }
  cached_ = false;
  xhat_ = Tensor();
  return gx;
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamSlot>& out) {
  out.push_back({prefix + ".weight", &gamma, &grad_gamma});
  out.push_back({prefix + ".bias", &beta, &grad_beta});
  out.push_back({prefix + ".running_mean", &running_mean, nullptr});
  out.push_back({prefix + ".running_var", &running_var, nullptr});
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (ctx.training) {
    input_ = x;
    cached_ = true;
  }
  return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
  require_cache(cached_, "relu");
  require_same_shape(grad_out, input_.shape(), "relu");
  Tensor gx(input_.shape());
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = input_[i] > 0.0 ? grad_out[i] : 0.0;
  cached_ = false;
  input_ = Tensor();
  return gx;
}

// ---------------------------------------------------------------- MaxPool2x2

Tensor MaxPool2x2::forward(const Tensor& x, const ForwardContext& ctx) {
  require_rank(x, 4, "maxpool2x2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw InputError("maxpool2x2: spatial extent below 2 in " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y({n, c, oh, ow});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        y[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  if (ctx.training) {
    input_shape_ = x.shape();
    argmax_ = std::move(argmax);
    cached_ = true;
  }
  return y;
}

Tensor MaxPool2x2::backward(const Tensor& grad_out) {
  require_cache(cached_, "maxpool2x2");
  require_same_shape(grad_out, {input_shape_[0], input_shape_[1], input_shape_[2] / 2, input_shape_[3] / 2},
                     "maxpool2x2");
  Tensor gx(input_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gx[argmax_[o]] += grad_out[o];
  cached_ = false;
  return gx;
}

// ---------------------------------------------------------------- AdaptiveAvgPool

Tensor AdaptiveAvgPool::forward(const Tensor& x, const ForwardContext& ctx) {
  require_rank(x, 4, "adaptiveavgpool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({n, c, 1, 1});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    double sum = 0.0;
    for (std::size_t i = 0; i < hw; ++i) sum += x[plane * hw + i];
    y[plane] = sum / static_cast<double>(hw);
  }
  if (ctx.training) {
    input_shape_ = x.shape();
    cached_ = true;
  }
  return y;
}

Tensor AdaptiveAvgPool::backward(const Tensor& grad_out) {
  require_cache(cached_, "adaptiveavgpool");
  require_same_shape(grad_out, {input_shape_[0], input_shape_[1], 1, 1}, "adaptiveavgpool");
  const std::size_t hw = input_shape_[2] * input_shape_[3];
  Tensor gx(input_shape_);
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t plane = 0; plane < grad_out.size(); ++plane) {
    for (std::size_t i = 0; i < hw; ++i) gx[plane * hw + i] = grad_out[plane] * inv;
  }
  cached_ = false;
  return gx;
}

// ---------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, const ForwardContext& ctx) {
  if (x.rank() < 1) throw InputError("flatten: scalar input");
  if (ctx.training) {
    input_shape_ = x.shape();
    cached_ = true;
  }
  return x.reshaped({x.dim(0), x.row_size()});
}

Tensor Flatten::backward(const Tensor& grad_out) {
  require_cache(cached_, "flatten");
  if (grad_out.size() != shape_numel(input_shape_)) {
    throw InputError("flatten: upstream gradient " + shape_str(grad_out.shape()) +
                     " does not match input " + shape_str(input_shape_));
  }
  cached_ = false;
  return grad_out.reshaped(input_shape_);
}

}  // namespace fedquad
