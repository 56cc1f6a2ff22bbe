#pragma once

// Direct (loop) convolution, zero padding, max/average pooling and batch
// normalization over [batch, channel, height, width] tensors, each with an
// exact backward pass.

#include <cstddef>
#include <optional>
#include <vector>

#include "dlk/tensor.hpp"

namespace dlk {

struct ConvSpec {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  /// ⌊(m + 2·pad − p)/s⌋ + 1; throws ShapeError when the kernel exceeds the padded side.
  std::size_t output_side(std::size_t input_side) const;
  void validate() const;
};

/// Zero border of width d on both spatial axes.
Tensor4 pad(const Tensor4& input, std::size_t d);
/// Inverse of pad for gradients: drops the border of width d.
Tensor4 crop(const Tensor4& input, std::size_t d);

/// O(b,d,i,j) = Σ_c Σ_u Σ_v J(b, c, i·s + u, j·s + v) K(d,c,u,v), J = pad(I).
/// The optional bias adds one value per output channel.
Tensor4 conv_forward(const Tensor4& input, const Tensor4& kernel, const ConvSpec& spec,
                     const std::optional<Vector>& bias = std::nullopt);

struct ConvGradients {
  Tensor4 input;
  Tensor4 kernel;
  Vector bias;  // per output channel; filled regardless of whether a bias was used
};

/// Adjoint of conv_forward with respect to the input and the kernel.
ConvGradients conv_backward(const Tensor4& grad_out, const Tensor4& input, const Tensor4& kernel,
                            const ConvSpec& spec);

struct MaxPoolResult {
  Tensor4 output;
  /// Flat input offset of the selected element for every output entry.
  std::vector<std::size_t> argmax;
};

/// Window p, stride s, channels preserved. Ties go to the first element in
/// row-major window order.
MaxPoolResult maxpool_forward(const Tensor4& input, std::size_t p, std::size_t s);
Tensor4 maxpool_backward(const Tensor4& grad_out, const std::vector<std::size_t>& argmax,
                         const Tensor4::Dims& input_dims);

Tensor4 avgpool_forward(const Tensor4& input, std::size_t p, std::size_t s);
Tensor4 avgpool_backward(const Tensor4& grad_out, const Tensor4::Dims& input_dims, std::size_t p, std::size_t s);

/// Smallest gap between the winning value and the runner-up across all
/// max-pool windows (infinity for 1-element windows). Finite differences are
/// only meaningful when this exceeds the probe step.
double maxpool_min_gap(const Tensor4& input, std::size_t p, std::size_t s);

enum class NormMode { Train, Eval };

struct BatchNormState {
  Vector gamma;
  Vector beta;
  double epsilon = 1e-5;
  double momentum = 0.9;
  Vector running_mean;
  Vector running_var;
  NormMode mode = NormMode::Train;

  /// γ = 1, β = 0, running mean 0, running variance 1.
  static BatchNormState for_channels(std::size_t channels);
};

struct BatchNormCache {
  Tensor4 x_hat;
  Vector inv_std;  // per channel 1/√(σ²+ε)
  NormMode mode = NormMode::Train;
};

struct BatchNormResult {
  Tensor4 output;
  BatchNormCache cache;
};

/// Per-channel normalization over the batch and spatial axes. In training mode
/// uses batch statistics (population variance) and updates the running
/// statistics as running ← momentum·running + (1 − momentum)·batch; at least two
/// values per channel are required. Evaluation mode uses the running statistics.
BatchNormResult batchnorm_forward(const Tensor4& x, BatchNormState& state);

struct BatchNormGradients {
  Tensor4 input;
  Vector gamma;
  Vector beta;
};

BatchNormGradients batchnorm_backward(const Tensor4& grad_out, const BatchNormCache& cache,
                                      const BatchNormState& state);

}  // namespace dlk
