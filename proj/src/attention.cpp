#include "dlk/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "dlk/mlp.hpp"

namespace dlk {

namespace {

double init_scale(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void require_width(const Matrix& x, std::size_t d, const char* what) {
  if (x.cols() != d) throw ShapeError(fmt::format("{}: expected {} columns, got {}", what, d, x.cols()));
}

void require_len(const Vector& v, std::size_t n, const char* what) {
  if (v.size() != n) throw ShapeError(fmt::format("{}: expected length {}, got {}", what, n, v.size()));
}

}  // namespace

AttentionHead AttentionHead::random(std::size_t d, std::size_t d_k, std::size_t d_v, Rng& rng) {
  const double s = init_scale(d);
  return {rng.normal_matrix(d, d_k, s), rng.normal_matrix(d, d_k, s), rng.normal_matrix(d, d_v, s)};
}

void AttentionHead::validate() const {
  if (!w_q.same_shape(w_k)) {
    throw ShapeError(fmt::format("W_Q {} and W_K {} must share a shape", w_q.shape_string(), w_k.shape_string()));
  }
  if (w_v.rows() != w_q.rows()) {
    throw ShapeError(fmt::format("W_V {} must read the same width as W_Q {}", w_v.shape_string(), w_q.shape_string()));
  }
}

AttentionCache attention_forward(const Matrix& x, const AttentionHead& head) {
  head.validate();
  require_width(x, head.input_dim(), "attention input");
  AttentionCache c;
  c.q = matmul(x, head.w_q);
  c.k = matmul(x, head.w_k);
  c.v = matmul(x, head.w_v);
  c.a = softmax_rows(scale(matmul(c.q, transpose(c.k)), 1.0 / std::sqrt(static_cast<double>(head.key_dim()))));
  c.z = matmul(c.a, c.v);
  return c;
}

Matrix attention_scores(const Matrix& x, const AttentionHead& head) { return attention_forward(x, head).a; }

Matrix attention_output(const Matrix& x, const AttentionHead& head) { return attention_forward(x, head).z; }

AttentionGradients attention_backward(const Matrix& x, const AttentionHead& head, const AttentionCache& c,
                                      const Matrix& dz) {
  if (!dz.same_shape(c.z)) throw ShapeError(fmt::format("attention_backward: dZ {} vs Z {}", dz.shape_string(), c.z.shape_string()));
  const double inv_root = 1.0 / std::sqrt(static_cast<double>(head.key_dim()));
  const Matrix da = matmul(dz, transpose(c.v));
  const Matrix dv = matmul(transpose(c.a), dz);
  Matrix ds(c.a.rows(), c.a.cols());
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < ds.cols(); ++j) inner += da(i, j) * c.a(i, j);
    for (std::size_t j = 0; j < ds.cols(); ++j) ds(i, j) = c.a(i, j) * (da(i, j) - inner) * inv_root;
  }
  const Matrix dq = matmul(ds, c.k);
  const Matrix dk = matmul(transpose(ds), c.q);
  const Matrix xt = transpose(x);
  AttentionGradients g;
  g.head = {matmul(xt, dq), matmul(xt, dk), matmul(xt, dv)};
  g.x = add(add(matmul(dq, transpose(head.w_q)), matmul(dk, transpose(head.w_k))), matmul(dv, transpose(head.w_v)));
  return g;
}

Vector layernorm(const Vector& row, const Vector& gain, const Vector& offset, double epsilon) {
  const Matrix out = layernorm_rows(Matrix::row_vector(row), gain, offset, epsilon);
  return out.row_copy(0);
}

Matrix layernorm_rows(const Matrix& x, const Vector& gain, const Vector& offset, double epsilon,
                      LayerNormCache* cache) {
  require_len(gain, x.cols(), "layernorm gain");
  require_len(offset, x.cols(), "layernorm offset");
  const double d = static_cast<double>(x.cols());
  Matrix x_hat(x.rows(), x.cols());
  std::vector<double> inv_std(x.rows());
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= d;
    inv_std[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      x_hat(i, j) = (r[j] - mean) * inv_std[i];
      out(i, j) = x_hat(i, j) * gain[j] + offset[j];
    }
  }
  if (cache) *cache = {std::move(x_hat), std::move(inv_std)};
  return out;
}

LayerNormGradients layernorm_backward(const LayerNormCache& cache, const Vector& gain, const Matrix& dy) {
  if (!dy.same_shape(cache.x_hat)) throw ShapeError("layernorm_backward: gradient shape does not match cache");
  const std::size_t n = dy.rows();
  const std::size_t d = dy.cols();
  LayerNormGradients g{Matrix(n, d), Vector(d), Vector(d)};
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dxh = 0.0;
    double mean_dxh_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dy(i, j) * gain[j];
      mean_dxh += dxh;
      mean_dxh_xh += dxh * cache.x_hat(i, j);
      g.gain[j] += dy(i, j) * cache.x_hat(i, j);
      g.offset[j] += dy(i, j);
    }
    mean_dxh /= static_cast<double>(d);
    mean_dxh_xh /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dy(i, j) * gain[j];
      g.input(i, j) = cache.inv_std[i] * (dxh - mean_dxh - cache.x_hat(i, j) * mean_dxh_xh);
    }
  }
  return g;
}

FeedForward FeedForward::random(std::size_t d_in, std::size_t d_ff, std::size_t d_out, Rng& rng) {
  return {rng.normal_matrix(d_in, d_ff, init_scale(d_in)), Vector(d_ff), rng.normal_matrix(d_ff, d_out, init_scale(d_ff)),
          Vector(d_out)};
}

void FeedForward::validate() const {
  if (w1.cols() != w2.rows()) {
    throw ShapeError(fmt::format("FFN: W1 {} does not chain into W2 {}", w1.shape_string(), w2.shape_string()));
  }
  require_len(b1, w1.cols(), "FFN b1");
  require_len(b2, w2.cols(), "FFN b2");
}

Matrix ffn_forward(const Matrix& z, const FeedForward& ffn, FeedForwardCache* cache) {
  ffn.validate();
  require_width(z, ffn.w1.rows(), "FFN input");
  Matrix pre = add_row_broadcast(matmul(z, ffn.w1), ffn.b1);
  Matrix hidden = relu(pre);
  Matrix out = add_row_broadcast(matmul(hidden, ffn.w2), ffn.b2);
  if (cache) *cache = {z, std::move(pre), std::move(hidden)};
  return out;
}

FeedForwardGradients ffn_backward(const FeedForward& ffn, const FeedForwardCache& cache, const Matrix& dy) {
  FeedForwardGradients g;
  g.params.w2 = matmul(transpose(cache.hidden), dy);
  g.params.b2 = column_sum(dy);
  const Matrix d_pre = hadamard(matmul(dy, transpose(ffn.w2)), relu_prime(cache.pre));
  g.params.w1 = matmul(transpose(cache.input), d_pre);
  g.params.b1 = column_sum(d_pre);
  g.input = matmul(d_pre, transpose(ffn.w1));
  return g;
}

double ffn_kink_distance(const FeedForwardCache& cache) {
  double best = std::numeric_limits<double>::infinity();
  for (double v : cache.pre.values()) best = std::min(best, std::abs(v));
  return best;
}

TransformerBlock TransformerBlock::random(std::size_t d, std::size_t d_k, std::size_t d_v, std::size_t d_ff, Rng& rng,
                                          BlockVariant variant) {
  TransformerBlock b;
  b.head = AttentionHead::random(d, d_k, d_v, rng);
  const std::size_t ffn_in = variant == BlockVariant::Formula ? d_v : d;
  b.ffn = FeedForward::random(ffn_in, d_ff, d, rng);
  b.gain = Vector(d, 1.0);
  b.offset = Vector(d);
  b.attn_gain = Vector(d, 1.0);
  b.attn_offset = Vector(d);
  b.variant = variant;
  return b;
}

void TransformerBlock::validate() const {
  head.validate();
  ffn.validate();
  const std::size_t d = head.input_dim();
  if (ffn.w2.cols() != d) {
    throw ShapeError(fmt::format("FFN output width {} must equal the input width {} for the residual", ffn.w2.cols(), d));
  }
  if (variant == BlockVariant::Formula) {
    if (ffn.w1.rows() != head.value_dim()) {
      throw ShapeError(fmt::format("FFN input width {} must equal d_v = {}", ffn.w1.rows(), head.value_dim()));
    }
  } else {
    if (head.value_dim() != d) throw ShapeError("the two Add&Norm variant needs d_v = d");
    if (ffn.w1.rows() != d) throw ShapeError("the two Add&Norm variant needs an FFN reading width d");
    require_len(attn_gain, d, "attention LayerNorm gain");
    require_len(attn_offset, d, "attention LayerNorm offset");
  }
  require_len(gain, d, "LayerNorm gain");
  require_len(offset, d, "LayerNorm offset");
}

std::vector<NamedBlock> TransformerBlock::blocks() {
  std::vector<NamedBlock> out{{"W_Q", head.w_q.values()}, {"W_K", head.w_k.values()}, {"W_V", head.w_v.values()},
                              {"W1", ffn.w1.values()},    {"b1", ffn.b1.values()},    {"W2", ffn.w2.values()},
                              {"b2", ffn.b2.values()},    {"ln.gain", gain.values()}, {"ln.offset", offset.values()}};
  if (variant == BlockVariant::TwoAddNorm) {
    out.push_back({"ln_attn.gain", attn_gain.values()});
    out.push_back({"ln_attn.offset", attn_offset.values()});
  }
  return out;
}

TransformerCache transformer_forward_cached(const Matrix& x, const TransformerBlock& block) {
  block.validate();
  TransformerCache c;
  c.attention = attention_forward(x, block.head);
  if (block.variant == BlockVariant::Formula) {
    c.h = c.attention.z;
  } else {
    c.h = layernorm_rows(add(x, c.attention.z), block.attn_gain, block.attn_offset, block.epsilon, &c.attn_norm);
  }
  const Matrix f = ffn_forward(c.h, block.ffn, &c.ffn);
  const Matrix res = block.variant == BlockVariant::Formula ? add(x, f) : add(c.h, f);
  c.output = layernorm_rows(res, block.gain, block.offset, block.epsilon, &c.out_norm);
  return c;
}

Matrix transformer_block_forward(const Matrix& x, const TransformerBlock& block) {
  return transformer_forward_cached(x, block).output;
}

TransformerGradients transformer_block_backward(const Matrix& x, const TransformerBlock& block,
                                                const TransformerCache& c, const Matrix& dout) {
  if (!dout.same_shape(c.output)) throw ShapeError("transformer_block_backward: gradient shape does not match output");
  TransformerGradients g;
  g.params = block;
  const LayerNormGradients out_ln = layernorm_backward(c.out_norm, block.gain, dout);
  g.params.gain = out_ln.gain;
  g.params.offset = out_ln.offset;
  const FeedForwardGradients ffn = ffn_backward(block.ffn, c.ffn, out_ln.input);
  g.params.ffn = ffn.params;

  Matrix dz;
  if (block.variant == BlockVariant::Formula) {
    g.x = out_ln.input;
    dz = ffn.input;
    g.params.attn_gain = Vector(block.attn_gain.size());
    g.params.attn_offset = Vector(block.attn_offset.size());
  } else {
    const LayerNormGradients attn_ln = layernorm_backward(c.attn_norm, block.attn_gain, add(out_ln.input, ffn.input));
    g.params.attn_gain = attn_ln.gain;
    g.params.attn_offset = attn_ln.offset;
    g.x = attn_ln.input;
    dz = attn_ln.input;
  }
  const AttentionGradients attn = attention_backward(x, block.head, c.attention, dz);
  g.params.head = attn.head;
  add_inplace(g.x, attn.x);
  return g;
}

}  // namespace dlk
