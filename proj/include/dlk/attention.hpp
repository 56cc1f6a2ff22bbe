#pragma once

// Single-head scaled dot-product attention and a one-head transformer block.
// Tokens are rows: X is n×d, Q = X W_Q, K = X W_K, V = X W_V,
// A = softmax(QKᵀ/√d_k) row by row, Z = A V.
//
// The block follows
//   Res = X + FFN(Z),  FFN(z) = ReLU(z W₁ + b₁) W₂ + b₂,  Output = LayerNorm(Res)
// with W₂ mapping back to width d so the residual is well-typed. The
// TwoAddNorm variant instead computes H = LN_a(X + Z), Output = LN(H + FFN(H)),
// which needs d_v = d. No positional encoding is applied anywhere.

#include <vector>

#include "dlk/random.hpp"
#include "dlk/tensor.hpp"

namespace dlk {

inline constexpr double kLayerNormEpsilon = 1e-5;

struct AttentionHead {
  Matrix w_q;  // d x d_k
  Matrix w_k;  // d x d_k
  Matrix w_v;  // d x d_v

  static AttentionHead random(std::size_t d, std::size_t d_k, std::size_t d_v, Rng& rng);
  std::size_t input_dim() const { return w_q.rows(); }
  std::size_t key_dim() const { return w_q.cols(); }
  std::size_t value_dim() const { return w_v.cols(); }
  void validate() const;
};

struct AttentionCache {
  Matrix q, k, v;
  Matrix a;  // n x n scores after row softmax
  Matrix z;  // n x d_v
};

AttentionCache attention_forward(const Matrix& x, const AttentionHead& head);
Matrix attention_scores(const Matrix& x, const AttentionHead& head);
Matrix attention_output(const Matrix& x, const AttentionHead& head);

struct AttentionGradients {
  Matrix x;
  AttentionHead head;
};

AttentionGradients attention_backward(const Matrix& x, const AttentionHead& head, const AttentionCache& cache,
                                      const Matrix& dz);

/// (row − mean) / √(var + ε) ∗ gain + offset, with the population variance of the row.
Vector layernorm(const Vector& row, const Vector& gain, const Vector& offset, double epsilon = kLayerNormEpsilon);

struct LayerNormCache {
  Matrix x_hat;
  std::vector<double> inv_std;
};

Matrix layernorm_rows(const Matrix& x, const Vector& gain, const Vector& offset, double epsilon,
                      LayerNormCache* cache = nullptr);

struct LayerNormGradients {
  Matrix input;
  Vector gain;
  Vector offset;
};

LayerNormGradients layernorm_backward(const LayerNormCache& cache, const Vector& gain, const Matrix& dy);

struct FeedForward {
  Matrix w1;  // d_in x d_ff
  Vector b1;
  Matrix w2;  // d_ff x d_out
  Vector b2;

  static FeedForward random(std::size_t d_in, std::size_t d_ff, std::size_t d_out, Rng& rng);
  void validate() const;
};

struct FeedForwardCache {
  Matrix input;
  Matrix pre;     // z W₁ + b₁
  Matrix hidden;  // ReLU(pre)
};

Matrix ffn_forward(const Matrix& z, const FeedForward& ffn, FeedForwardCache* cache = nullptr);

struct FeedForwardGradients {
  Matrix input;
  FeedForward params;
};

FeedForwardGradients ffn_backward(const FeedForward& ffn, const FeedForwardCache& cache, const Matrix& dy);

enum class BlockVariant { Formula, TwoAddNorm };

struct TransformerBlock {
  AttentionHead head;
  FeedForward ffn;
  Vector gain;    // final LayerNorm
  Vector offset;
  Vector attn_gain;  // TwoAddNorm only
  Vector attn_offset;
  double epsilon = kLayerNormEpsilon;
  BlockVariant variant = BlockVariant::Formula;

  static TransformerBlock random(std::size_t d, std::size_t d_k, std::size_t d_v, std::size_t d_ff, Rng& rng,
                                 BlockVariant variant = BlockVariant::Formula);
  void validate() const;
  std::vector<NamedBlock> blocks();
};

struct TransformerCache {
  AttentionCache attention;
  Matrix h;  // FFN input: Z, or LN_a(X + Z) in the variant
  LayerNormCache attn_norm;
  FeedForwardCache ffn;
  LayerNormCache out_norm;
  Matrix output;
};

TransformerCache transformer_forward_cached(const Matrix& x, const TransformerBlock& block);
Matrix transformer_block_forward(const Matrix& x, const TransformerBlock& block);

struct TransformerGradients {
  Matrix x;
  TransformerBlock params;
};

TransformerGradients transformer_block_backward(const Matrix& x, const TransformerBlock& block,
                                                const TransformerCache& cache, const Matrix& dout);

/// Smallest |z W₁ + b₁| entry, the distance of the FFN ReLU from its kink.
double ffn_kink_distance(const FeedForwardCache& cache);

}  // namespace dlk
