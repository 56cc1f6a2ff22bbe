#pragma once

// Fully connected network with ReLU hidden layers and a softmax output,
// trained on cross-entropy with hand-derived backpropagation:
//
//   Z_i = H_{i-1} W_i + b_i,   H_i = relu(Z_i) (i < d),   H_d = softmax(Z_d)
//   ∇Z_d = (Ŷ − Y)/N
//   ∇H_i = ∇Z_{i+1} W_{i+1}ᵀ,  ∇Z_i = ∇H_i ∗ r'(Z_i)
//   ∇W_i = H_{i-1}ᵀ ∇Z_i,      ∇b_i = column sums of ∇Z_i

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlk/linear.hpp"
#include "dlk/optim.hpp"
#include "dlk/random.hpp"
#include "dlk/tensor.hpp"

namespace dlk {

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // n_0, ..., n_d
  std::uint64_t seed = 0;
  double dropout_rate = 0.0;
  double l2_lambda = 0.0;

  std::size_t depth() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  void validate() const;
};

struct MlpState {
  std::vector<Matrix> weights;  // W_i : n_{i-1} x n_i
  std::vector<Vector> biases;   // b_i : n_i

  std::size_t depth() const { return weights.size(); }
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);
};

/// Gradients share the parameter layout.
using MlpGradients = MlpState;

struct ForwardCache {
  std::vector<Matrix> z;  // Z_1..Z_d
  std::vector<Matrix> h;  // H_0..H_d, H_0 = X
  /// Inverted-dropout masks applied to H_1..H_{d-1}; empty in evaluation mode.
  std::vector<Matrix> masks;

  const Matrix& output() const { return h.back(); }
};

Matrix relu(const Matrix& x);
/// r'(x) = 1 for x ≥ 0, else 0.
Matrix relu_prime(const Matrix& x);
double relu(double x);
double relu_prime(double x);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& z);
Vector softmax(const Vector& z);
/// diag(s) − s sᵀ
Matrix softmax_jacobian(const Vector& s);

/// −(1/N) Σ y log ŷ with ŷ clipped to [kProbabilityClip, 1 − kProbabilityClip].
double cross_entropy(const Matrix& y_hat, const Matrix& y);

/// label k ↦ e_k
Matrix one_hot(const std::vector<int>& labels, std::size_t classes);

/// N(0,1)/√n_{i-1} weights, zero biases.
MlpState init_weights(const MlpSpec& spec);
/// All-zero weights and biases; used to exhibit the symmetry failure of zero initialization.
MlpState zero_state(const MlpSpec& spec);

/// Bernoulli(1 − rate) mask scaled by 1/(1 − rate).
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng);

struct DropoutConfig {
  double rate = 0.0;
  Rng* rng = nullptr;
};

/// Evaluation-mode forward unless `dropout` carries a positive rate and a generator.
ForwardCache forward(const Matrix& x, const MlpState& state, const DropoutConfig& dropout = {});

/// Cross-entropy plus λ Σ‖W_i‖².
double total_loss(const ForwardCache& cache, const MlpState& state, const Matrix& y, double l2_lambda = 0.0);

MlpGradients backward(const ForwardCache& cache, const MlpState& state, const Matrix& y, double l2_lambda = 0.0);

/// Index of the largest entry in each row.
std::vector<int> predict_classes(const Matrix& probabilities);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

struct MlpTrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  bool shuffle = false;
  OptimizerConfig optimizer = OptimizerConfig::defaults(OptimizerKind::Adam);
};

struct MlpEpoch {
  double loss;
  double accuracy;
};

struct MlpTrainResult {
  MlpState state;
  std::vector<MlpEpoch> history;
};

/// Mini-batch training. The final batch may be short; epoch loss is the
/// size-weighted mean of batch losses. Accuracy is measured on the full
/// training set in evaluation mode after each epoch. Labels are class indices.
MlpTrainResult train_mlp(const MlpSpec& spec, const Matrix& x, const std::vector<int>& labels,
                         const MlpTrainOptions& options);

/// Same, continuing from a given state.
MlpTrainResult train_mlp(const MlpSpec& spec, MlpState initial, const Matrix& x, const std::vector<int>& labels,
                         const MlpTrainOptions& options);

/// Flat JSON document: {"layer_sizes": [...], "weights": [{"rows", "cols", "data"}], "biases": [[...]]}
std::string mlp_state_to_json(const MlpState& state);
/// Throws std::invalid_argument on a malformed document.
MlpState mlp_state_from_json(const std::string& text);

}  // namespace dlk
