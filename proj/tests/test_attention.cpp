#include "dlk/attention.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "dlk/checks.hpp"
#include "dlk/gradcheck.hpp"
#include "dlk/mlp.hpp"
#include "test_util.hpp"

namespace dlk {
namespace {

using test::oracles;
using test::to_matrix;
using test::to_vector;

Matrix permute_rows(const Matrix& x, const std::vector<std::size_t>& perm) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(perm[i], j);
  return out;
}

TEST(AttentionScores, SingleTokenAndIdenticalTokens) {
  Rng rng(1);
  AttentionHead head = AttentionHead::random(4, 3, 2, rng);
  Matrix one = rng.normal_matrix(1, 4);
  EXPECT_EQ(attention_scores(one, head), Matrix::from_rows({{1.0}}));
  EXPECT_LT(max_abs_difference(attention_output(one, head).values(), matmul(one, head.w_v).values()), 1e-15);

  Matrix same(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) same(i, j) = one(0, j);
  Matrix a = attention_scores(same, head);
  for (double v : a.values()) EXPECT_NEAR(v, 0.2, 1e-15);
  Matrix z = attention_output(same, head);
  Matrix v = matmul(same, head.w_v);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(z(i, j), v(0, j), 1e-14);
  EXPECT_THROW(attention_scores(Matrix(2, 3), head), ShapeError);
}

TEST(AttentionScores, MatchesPairwiseLoopOracle) {
  const auto& f = oracles()["attention"]["scores"];
  AttentionHead head{to_matrix(f["w_q"]), to_matrix(f["w_k"]), to_matrix(f["w_v"])};
  Matrix x = to_matrix(f["x"]);
  EXPECT_LT(max_abs_difference(attention_scores(x, head).values(), to_matrix(f["a"]).values()), 1e-15);
  EXPECT_LT(max_abs_difference(attention_output(x, head).values(), to_matrix(f["z"]).values()), 1e-14);
}

TEST(AttentionScores, RowsAreProbabilityVectors) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    AttentionHead head = AttentionHead::random(3 + rng.index(4), 1 + rng.index(4), 1 + rng.index(4), rng);
    Matrix a = attention_scores(rng.normal_matrix(1 + rng.index(8), head.input_dim(), 3.0), head);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double sum = 0;
      for (double v : a.row(i)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(AttentionOutput, PermutationEquivariance) {
  Rng rng(3);
  AttentionHead head = AttentionHead::random(4, 3, 3, rng);
  Matrix x = rng.normal_matrix(6, 4);
  Matrix z = attention_output(x, head);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> perm = rng.permutation(6);
    Matrix pz = attention_output(permute_rows(x, perm), head);
    EXPECT_LT(max_abs_difference(pz.values(), permute_rows(z, perm).values()), 1e-12);
  }
}

TEST(AttentionBackward, MatchesFiniteDifferences) {
  SuiteResult r = run_check_suite("attention", 20, 5);
  EXPECT_TRUE(r.report.pass) << r.report.max_rel_error << " in " << r.report.worst_block;
}

TEST(LayerNorm, ConstantRowAndMoments) {
  Vector zero = layernorm(Vector(4, 3.5), Vector(4, 1.0), Vector(4));
  for (double v : zero) EXPECT_EQ(v, 0.0);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Vector row = rng.normal_vector(6, 3.0);
    Vector y = layernorm(row, Vector(6, 1.0), Vector(6));
    double mean = 0, var = 0, raw_mean = 0, raw_var = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      mean += y[i] / 6;
      raw_mean += row[i] / 6;
    }
    for (std::size_t i = 0; i < 6; ++i) {
      var += (y[i] - mean) * (y[i] - mean) / 6;
      raw_var += (row[i] - raw_mean) * (row[i] - raw_mean) / 6;
    }
    EXPECT_LT(std::abs(mean), 1e-12);
    EXPECT_NEAR(var, raw_var / (raw_var + kLayerNormEpsilon), 1e-12);
  }
}

TEST(LayerNorm, BackwardMatchesFiniteDifferences) {
  SuiteResult r = run_check_suite("layernorm", 20, 6);
  EXPECT_TRUE(r.report.pass) << r.report.max_rel_error << " in " << r.report.worst_block;
}

TEST(FeedForward, BackwardMatchesFiniteDifferences) {
  SuiteResult r = run_check_suite("ffn", 20, 7);
  EXPECT_TRUE(r.report.pass) << r.report.max_rel_error << " in " << r.report.worst_block;
}

TEST(TransformerBlock, ZeroFeedForwardGivesLayerNormOfInput) {
  Rng rng(8);
  TransformerBlock b = TransformerBlock::random(4, 2, 3, 5, rng);
  b.ffn = FeedForward{Matrix(3, 5), Vector(5), Matrix(5, 4), Vector(4)};
  Matrix x = rng.normal_matrix(3, 4);
  Matrix out = transformer_block_forward(x, b);
  Matrix want = layernorm_rows(x, b.gain, b.offset, b.epsilon);
  EXPECT_LT(max_abs_difference(out.values(), want.values()), 1e-15);
}

TEST(TransformerBlock, SingleTokenComposition) {
  Rng rng(9);
  TransformerBlock b = TransformerBlock::random(4, 2, 3, 5, rng);
  Matrix x = rng.normal_matrix(1, 4);
  Matrix res = add(x, ffn_forward(matmul(x, b.head.w_v), b.ffn));
  Vector want = layernorm(res.row_copy(0), b.gain, b.offset, b.epsilon);
  EXPECT_LT(max_abs_difference(transformer_block_forward(x, b).values(), want.values()), 1e-14);
}

TEST(TransformerBlock, MatchesAutogradOracle) {
  const auto& f = oracles()["attention"]["transformer"];
  const auto& p = f["params"];
  TransformerBlock b;
  b.head = {to_matrix(p["w_q"]), to_matrix(p["w_k"]), to_matrix(p["w_v"])};
  b.ffn = {to_matrix(p["w1"]), to_vector(p["b1"]), to_matrix(p["w2"]), to_vector(p["b2"])};
  b.gain = to_vector(p["gain"]);
  b.offset = to_vector(p["offset"]);
  Matrix x = to_matrix(f["x"]);
  TransformerCache cache = transformer_forward_cached(x, b);
  EXPECT_LT(max_abs_difference(cache.output.values(), to_matrix(f["output"]).values()), 1e-13);
  TransformerGradients g = transformer_block_backward(x, b, cache, to_matrix(f["grad_out"]));
  const double tol = 1e-10;
  EXPECT_LT(test::max_rel_error(g.x.values(), to_matrix(f["grad_x"]).values()), tol);
  const auto& gw = f["grad"];
  EXPECT_LT(test::max_rel_error(g.params.head.w_q.values(), to_matrix(gw["w_q"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.head.w_k.values(), to_matrix(gw["w_k"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.head.w_v.values(), to_matrix(gw["w_v"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.ffn.w1.values(), to_matrix(gw["w1"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.ffn.b1.values(), to_vector(gw["b1"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.ffn.w2.values(), to_matrix(gw["w2"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.ffn.b2.values(), to_vector(gw["b2"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.gain.values(), to_vector(gw["gain"]).values()), tol);
  EXPECT_LT(test::max_rel_error(g.params.offset.values(), to_vector(gw["offset"]).values()), tol);
}

TEST(TransformerBlock, BackwardMatchesFiniteDifferences) {
  SuiteResult r = run_check_suite("transformer", 20, 10);
  EXPECT_EQ(r.report.tolerance, 1e-4);
  EXPECT_TRUE(r.report.pass) << r.report.max_rel_error << " in " << r.report.worst_block;

  // The pinned shape: n = 3, d = 4, d_k = d_v = 2, d_ff = 5.
  Rng rng(11);
  int checked = 0;
  while (checked < 5) {
    TransformerBlock b = TransformerBlock::random(4, 2, 2, 5, rng);
    Matrix x = rng.normal_matrix(3, 4);
    Matrix g = rng.normal_matrix(3, 4);
    TransformerCache cache = transformer_forward_cached(x, b);
    if (ffn_kink_distance(cache.ffn) < 1e-3) continue;
    TransformerGradients grads = transformer_block_backward(x, b, cache, g);
    std::vector<NamedBlock> params = b.blocks();
    std::vector<NamedBlock> analytic = grads.params.blocks();
    std::vector<ParamBlock> blocks{{"x", x.values(), grads.x.values()}};
    for (std::size_t i = 0; i < params.size(); ++i) blocks.push_back({params[i].name, params[i].values, analytic[i].values});
    GradCheckOptions opts;
    opts.tol_rel = 1e-4;
    GradCheckReport rep = check_gradient([&] { return trace_inner(transformer_block_forward(x, b), g); }, blocks, opts);
    EXPECT_TRUE(rep.pass) << rep.max_rel_error << " in " << rep.worst_block;
    ++checked;
  }
}

TEST(TransformerBlock, TwoAddNormVariant) {
  Rng rng(12);
  EXPECT_THROW(TransformerBlock::random(4, 2, 3, 5, rng, BlockVariant::TwoAddNorm).validate(), std::invalid_argument);
  int checked = 0;
  while (checked < 5) {
    TransformerBlock b = TransformerBlock::random(4, 3, 4, 6, rng, BlockVariant::TwoAddNorm);
    Matrix x = rng.normal_matrix(3, 4);
    Matrix g = rng.normal_matrix(3, 4);
    TransformerCache cache = transformer_forward_cached(x, b);
    if (ffn_kink_distance(cache.ffn) < 1e-3) continue;
    Matrix h = layernorm_rows(add(x, attention_output(x, b.head)), b.attn_gain, b.attn_offset, b.epsilon);
    Matrix want = layernorm_rows(add(h, ffn_forward(h, b.ffn)), b.gain, b.offset, b.epsilon);
    EXPECT_LT(max_abs_difference(cache.output.values(), want.values()), 1e-14);
    TransformerGradients grads = transformer_block_backward(x, b, cache, g);
    std::vector<NamedBlock> params = b.blocks();
    std::vector<NamedBlock> analytic = grads.params.blocks();
    ASSERT_EQ(params.size(), 11u);
    std::vector<ParamBlock> blocks{{"x", x.values(), grads.x.values()}};
    for (std::size_t i = 0; i < params.size(); ++i) blocks.push_back({params[i].name, params[i].values, analytic[i].values});
    GradCheckOptions opts;
    opts.tol_rel = 1e-4;
    GradCheckReport rep = check_gradient([&] { return trace_inner(transformer_block_forward(x, b), g); }, blocks, opts);
    EXPECT_TRUE(rep.pass) << rep.max_rel_error << " in " << rep.worst_block;
    ++checked;
  }
}

}  // namespace
}  // namespace dlk
