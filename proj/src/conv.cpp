#include "dlk/conv.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace dlk {

std::size_t ConvSpec::output_side(std::size_t input_side) const {
  const std::size_t padded = input_side + 2 * pad;
  if (padded < kernel) {
    throw ShapeError(fmt::format("kernel {} exceeds padded input side {}", kernel, padded));
  }
  return (padded - kernel) / stride + 1;
}

void ConvSpec::validate() const {
  if (c_in == 0 || c_out == 0) throw std::invalid_argument("conv: channel counts must be positive");
  if (kernel == 0) throw std::invalid_argument("conv: kernel side must be >= 1");
  if (stride == 0) throw std::invalid_argument("conv: stride must be >= 1");
}

Tensor4 pad(const Tensor4& input, std::size_t d) {
  if (d == 0) return input;
  const auto& in = input.dims();
  Tensor4 out({in[0], in[1], in[2] + 2 * d, in[3] + 2 * d});
  for (std::size_t b = 0; b < in[0]; ++b)
    for (std::size_t c = 0; c < in[1]; ++c)
      for (std::size_t i = 0; i < in[2]; ++i)
        for (std::size_t j = 0; j < in[3]; ++j) out(b, c, i + d, j + d) = input(b, c, i, j);
  return out;
}

Tensor4 crop(const Tensor4& input, std::size_t d) {
  if (d == 0) return input;
  const auto& in = input.dims();
  if (in[2] < 2 * d || in[3] < 2 * d) throw ShapeError(fmt::format("crop {} from {}", d, input.shape_string()));
  Tensor4 out({in[0], in[1], in[2] - 2 * d, in[3] - 2 * d});
  const auto& od = out.dims();
  for (std::size_t b = 0; b < od[0]; ++b)
    for (std::size_t c = 0; c < od[1]; ++c)
      for (std::size_t i = 0; i < od[2]; ++i)
        for (std::size_t j = 0; j < od[3]; ++j) out(b, c, i, j) = input(b, c, i + d, j + d);
  return out;
}

namespace {

void check_conv_shapes(const Tensor4& input, const Tensor4& kernel, const ConvSpec& spec) {
  spec.validate();
  if (input.dim(1) != spec.c_in) {
    throw ShapeError(fmt::format("conv: input {} has {} channels, spec expects {}", input.shape_string(), input.dim(1),
                                 spec.c_in));
  }
  const Tensor4::Dims expected{spec.c_out, spec.c_in, spec.kernel, spec.kernel};
  if (kernel.dims() != expected) {
    throw ShapeError(fmt::format("conv: kernel {} but spec expects {}", kernel.shape_string(), shape_string(expected)));
  }
}

}  // namespace

Tensor4 conv_forward(const Tensor4& input, const Tensor4& kernel, const ConvSpec& spec,
                     const std::optional<Vector>& bias) {
  check_conv_shapes(input, kernel, spec);
  const std::size_t out_h = spec.output_side(input.dim(2));
  const std::size_t out_w = spec.output_side(input.dim(3));
  if (bias && bias->size() != spec.c_out) {
    throw ShapeError(fmt::format("conv: bias length {} for {} output channels", bias->size(), spec.c_out));
  }
  const Tensor4 padded = pad(input, spec.pad);
  const std::size_t batch = input.dim(0);
  const std::size_t p = spec.kernel;
  const std::size_t s = spec.stride;
  Tensor4 out({batch, spec.c_out, out_h, out_w});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t d = 0; d < spec.c_out; ++d)
      for (std::size_t i = 0; i < out_h; ++i)
        for (std::size_t j = 0; j < out_w; ++j) {
          double acc = bias ? (*bias)[d] : 0.0;
          for (std::size_t c = 0; c < spec.c_in; ++c)
            for (std::size_t u = 0; u < p; ++u)
              for (std::size_t v = 0; v < p; ++v) acc += padded(b, c, i * s + u, j * s + v) * kernel(d, c, u, v);
          out(b, d, i, j) = acc;
        }
  return out;
}

ConvGradients conv_backward(const Tensor4& grad_out, const Tensor4& input, const Tensor4& kernel,
                            const ConvSpec& spec) {
  check_conv_shapes(input, kernel, spec);
  const std::size_t batch = input.dim(0);
  const Tensor4::Dims expected{batch, spec.c_out, spec.output_side(input.dim(2)), spec.output_side(input.dim(3))};
  if (grad_out.dims() != expected) {
    throw ShapeError(
        fmt::format("conv_backward: gradient {} but forward output is {}", grad_out.shape_string(), shape_string(expected)));
  }
  const Tensor4 padded = pad(input, spec.pad);
  Tensor4 grad_padded(padded.dims());
  ConvGradients grads{Tensor4(), Tensor4(kernel.dims()), Vector(spec.c_out)};
  const std::size_t p = spec.kernel;
  const std::size_t s = spec.stride;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t d = 0; d < spec.c_out; ++d)
      for (std::size_t i = 0; i < expected[2]; ++i)
        for (std::size_t j = 0; j < expected[3]; ++j) {
          const double g = grad_out(b, d, i, j);
          grads.bias[d] += g;
          for (std::size_t c = 0; c < spec.c_in; ++c)
            for (std::size_t u = 0; u < p; ++u)
              for (std::size_t v = 0; v < p; ++v) {
                grads.kernel(d, c, u, v) += g * padded(b, c, i * s + u, j * s + v);
                grad_padded(b, c, i * s + u, j * s + v) += g * kernel(d, c, u, v);
              }
        }
  grads.input = crop(grad_padded, spec.pad);
  return grads;
}

namespace {

std::size_t pool_side(std::size_t side, std::size_t p, std::size_t s) {
  if (p == 0 || s == 0) throw std::invalid_argument("pool: window and stride must be >= 1");
  if (p > side) throw ShapeError(fmt::format("pool window {} exceeds input side {}", p, side));
  return (side - p) / s + 1;
}

}  // namespace

MaxPoolResult maxpool_forward(const Tensor4& input, std::size_t p, std::size_t s) {
  const auto& in = input.dims();
  const std::size_t oh = pool_side(in[2], p, s);
  const std::size_t ow = pool_side(in[3], p, s);
  MaxPoolResult r{Tensor4({in[0], in[1], oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t k = 0;
  for (std::size_t b = 0; b < in[0]; ++b)
    for (std::size_t c = 0; c < in[1]; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j, ++k) {
          std::size_t best = input.offset(b, c, i * s, j * s);
          for (std::size_t u = 0; u < p; ++u)
            for (std::size_t v = 0; v < p; ++v) {
              const std::size_t at = input.offset(b, c, i * s + u, j * s + v);
              if (input.raw()[at] > input.raw()[best]) best = at;
            }
          r.output(b, c, i, j) = input.raw()[best];
          r.argmax[k] = best;
        }
  return r;
}

Tensor4 maxpool_backward(const Tensor4& grad_out, const std::vector<std::size_t>& argmax,
                         const Tensor4::Dims& input_dims) {
  if (grad_out.size() != argmax.size()) {
    throw ShapeError(fmt::format("maxpool_backward: {} gradients for {} pooled entries", grad_out.size(), argmax.size()));
  }
  Tensor4 grad(input_dims);
  for (std::size_t k = 0; k < argmax.size(); ++k) grad.values()[argmax[k]] += grad_out.raw()[k];
  return grad;
}

double maxpool_min_gap(const Tensor4& input, std::size_t p, std::size_t s) {
  const auto& in = input.dims();
  const std::size_t oh = pool_side(in[2], p, s);
  const std::size_t ow = pool_side(in[3], p, s);
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < in[0]; ++b)
    for (std::size_t c = 0; c < in[1]; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double first = -std::numeric_limits<double>::infinity();
          double second = -std::numeric_limits<double>::infinity();
          for (std::size_t u = 0; u < p; ++u)
            for (std::size_t v = 0; v < p; ++v) {
              const double x = input(b, c, i * s + u, j * s + v);
              if (x > first) {
                second = first;
                first = x;
              } else if (x > second) {
                second = x;
              }
            }
          if (p * p > 1) gap = std::min(gap, first - second);
        }
  return gap;
}

Tensor4 avgpool_forward(const Tensor4& input, std::size_t p, std::size_t s) {
  const auto& in = input.dims();
  const std::size_t oh = pool_side(in[2], p, s);
  const std::size_t ow = pool_side(in[3], p, s);
  const double inv = 1.0 / static_cast<double>(p * p);
  Tensor4 out({in[0], in[1], oh, ow});
  for (std::size_t b = 0; b < in[0]; ++b)
    for (std::size_t c = 0; c < in[1]; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t u = 0; u < p; ++u)
            for (std::size_t v = 0; v < p; ++v) acc += input(b, c, i * s + u, j * s + v);
          out(b, c, i, j) = acc * inv;
        }
  return out;
}

Tensor4 avgpool_backward(const Tensor4& grad_out, const Tensor4::Dims& input_dims, std::size_t p, std::size_t s) {
  const std::size_t oh = pool_side(input_dims[2], p, s);
  const std::size_t ow = pool_side(input_dims[3], p, s);
  const Tensor4::Dims expected{input_dims[0], input_dims[1], oh, ow};
  if (grad_out.dims() != expected) {
    throw ShapeError(fmt::format("avgpool_backward: gradient {} but pooled output is {}", grad_out.shape_string(),
                                 shape_string(expected)));
  }
  const double inv = 1.0 / static_cast<double>(p * p);
  Tensor4 grad(input_dims);
  for (std::size_t b = 0; b < expected[0]; ++b)
    for (std::size_t c = 0; c < expected[1]; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const double g = grad_out(b, c, i, j) * inv;
          for (std::size_t u = 0; u < p; ++u)
            for (std::size_t v = 0; v < p; ++v) grad(b, c, i * s + u, j * s + v) += g;
        }
  return grad;
}

BatchNormState BatchNormState::for_channels(std::size_t channels) {
  BatchNormState st;
  st.gamma = Vector(channels, 1.0);
  st.beta = Vector(channels, 0.0);
  st.running_mean = Vector(channels, 0.0);
  st.running_var = Vector(channels, 1.0);
  return st;
}

BatchNormResult batchnorm_forward(const Tensor4& x, BatchNormState& state) {
  const auto& dims = x.dims();
  const std::size_t channels = dims[1];
  if (state.gamma.size() != channels || state.beta.size() != channels || state.running_mean.size() != channels ||
      state.running_var.size() != channels) {
    throw ShapeError(fmt::format("batchnorm: state sized for {} channels, input {}", state.gamma.size(), x.shape_string()));
  }
  if (!(state.epsilon > 0.0)) throw std::invalid_argument("batchnorm: epsilon must be > 0");
  const std::size_t per_channel = dims[0] * dims[2] * dims[3];
  if (state.mode == NormMode::Train && dims[0] < 2) {
    throw std::invalid_argument(fmt::format("batchnorm: training mode needs a batch of at least 2, got {}", dims[0]));
  }

  Vector mean(channels);
  Vector var(channels);
  if (state.mode == NormMode::Train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < dims[0]; ++b)
        for (std::size_t i = 0; i < dims[2]; ++i)
          for (std::size_t j = 0; j < dims[3]; ++j) acc += x(b, c, i, j);
      mean[c] = acc / static_cast<double>(per_channel);
      double sq = 0.0;
      for (std::size_t b = 0; b < dims[0]; ++b)
        for (std::size_t i = 0; i < dims[2]; ++i)
          for (std::size_t j = 0; j < dims[3]; ++j) sq += (x(b, c, i, j) - mean[c]) * (x(b, c, i, j) - mean[c]);
      var[c] = sq / static_cast<double>(per_channel);
      state.running_mean[c] = state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean[c];
      state.running_var[c] = state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  BatchNormResult r{Tensor4(dims), {Tensor4(dims), Vector(channels), state.mode}};
  for (std::size_t c = 0; c < channels; ++c) {
    const double inv_std = 1.0 / std::sqrt(var[c] + state.epsilon);
    r.cache.inv_std[c] = inv_std;
    for (std::size_t b = 0; b < dims[0]; ++b)
      for (std::size_t i = 0; i < dims[2]; ++i)
        for (std::size_t j = 0; j < dims[3]; ++j) {
          const double xh = (x(b, c, i, j) - mean[c]) * inv_std;
          r.cache.x_hat(b, c, i, j) = xh;
          r.output(b, c, i, j) = state.gamma[c] * xh + state.beta[c];
        }
  }
  return r;
}

BatchNormGradients batchnorm_backward(const Tensor4& grad_out, const BatchNormCache& cache,
                                      const BatchNormState& state) {
  const auto& dims = cache.x_hat.dims();
  if (grad_out.dims() != dims) {
    throw ShapeError(fmt::format("batchnorm_backward: gradient {} vs input {}", grad_out.shape_string(),
                                 cache.x_hat.shape_string()));
  }
  const std::size_t channels = dims[1];
  const double m = static_cast<double>(dims[0] * dims[2] * dims[3]);
  BatchNormGradients g{Tensor4(dims), Vector(channels), Vector(channels)};
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < dims[0]; ++b)
      for (std::size_t i = 0; i < dims[2]; ++i)
        for (std::size_t j = 0; j < dims[3]; ++j) {
          sum_dy += grad_out(b, c, i, j);
          sum_dy_xhat += grad_out(b, c, i, j) * cache.x_hat(b, c, i, j);
        }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xhat;
    const double scale_c = state.gamma[c] * cache.inv_std[c];
    for (std::size_t b = 0; b < dims[0]; ++b)
      for (std::size_t i = 0; i < dims[2]; ++i)
        for (std::size_t j = 0; j < dims[3]; ++j) {
          const double dy = grad_out(b, c, i, j);
          if (cache.mode == NormMode::Train) {
            g.input(b, c, i, j) = scale_c * (dy - sum_dy / m - cache.x_hat(b, c, i, j) * sum_dy_xhat / m);
          } else {
            g.input(b, c, i, j) = scale_c * dy;
          }
        }
  }
  return g;
}

}  // namespace dlk
