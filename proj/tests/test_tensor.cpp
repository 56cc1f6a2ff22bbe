#include "dlk/tensor.hpp"

#include <gtest/gtest.h>

#include "dlk/random.hpp"
#include "test_util.hpp"

namespace dlk {
namespace {

using test::oracles;
using test::to_matrix;

TEST(Matrix, RejectsEmptyAndMismatchedData) {
  EXPECT_THROW(Matrix(0, 3), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), ShapeError);
}

TEST(Matmul, IdentityAndZero) {
  Rng rng(1);
  Matrix a = rng.normal_matrix(3, 5);
  EXPECT_EQ(matmul(Matrix::identity(3), a), a);
  EXPECT_EQ(matmul(a, Matrix::zeros(5, 2)), Matrix::zeros(3, 2));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  const auto& f = oracles()["tensor"]["matmul"];
  const Matrix got = matmul(to_matrix(f["a"]), to_matrix(f["b"]));
  const Matrix want = to_matrix(f["out"]);
  EXPECT_LT(max_abs_difference(got.values(), want.values()), 1e-14);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Matrix(2, 3), Matrix(4, 2));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2x3)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(4x2)"), std::string::npos);
  }
}

TEST(TraceInner, BasisOrthogonalityAndPositivity) {
  Matrix e11(2, 2), e12(2, 2);
  e11(0, 0) = 1;
  e12(0, 1) = 1;
  EXPECT_EQ(trace_inner(e11, e12), 0.0);
  Rng rng(2);
  Matrix a = rng.normal_matrix(3, 4);
  double sq = 0;
  for (double v : a.values()) sq += v * v;
  EXPECT_DOUBLE_EQ(trace_inner(a, a), sq);
  EXPECT_GT(trace_inner(a, a), 0.0);
  EXPECT_EQ(trace_inner(Matrix(3, 4), Matrix(3, 4)), 0.0);
  EXPECT_THROW(trace_inner(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(TraceInner, MatchesTraceOfProductOracle) {
  const auto& f = oracles()["tensor"]["trace_inner"];
  const Matrix a = to_matrix(f["a"]);
  const Matrix b = to_matrix(f["b"]);
  EXPECT_NEAR(trace_inner(a, b), f["out"].get<double>(), 1e-13);
  EXPECT_NEAR(trace_inner(a, b), trace(matmul(transpose(b), a)), 1e-13);
}

TEST(Hadamard, IdentityZeroAndOracle) {
  Rng rng(3);
  Matrix a = rng.normal_matrix(3, 2);
  EXPECT_EQ(hadamard(a, Matrix::ones(3, 2)), a);
  EXPECT_EQ(hadamard(a, Matrix::zeros(3, 2)), Matrix::zeros(3, 2));
  const auto& f = oracles()["tensor"]["hadamard"];
  EXPECT_EQ(hadamard(to_matrix(f["a"]), to_matrix(f["b"])), to_matrix(f["out"]));
  EXPECT_THROW(hadamard(Matrix(2, 2), Matrix(2, 1)), ShapeError);
}

TEST(Plumbing, TransposeColumnSumBroadcast) {
  Rng rng(4);
  Matrix a = rng.normal_matrix(3, 5);
  EXPECT_EQ(transpose(transpose(a)), a);
  EXPECT_EQ(column_sum(Matrix::ones(3, 2)), (Vector{3, 3}));
  EXPECT_EQ(add_row_broadcast(a, Vector(5)), a);
  Matrix b = add_row_broadcast(Matrix::zeros(2, 3), Vector{1, 2, 3});
  EXPECT_EQ(b, Matrix::from_rows({{1, 2, 3}, {1, 2, 3}}));
  EXPECT_THROW(add_row_broadcast(a, Vector(4)), ShapeError);
  EXPECT_THROW(add(a, Matrix(5, 3)), ShapeError);
}

TEST(Properties, AdjointLaw) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.index(6), n = 1 + rng.index(6), k = 1 + rng.index(4);
    Matrix a = rng.normal_matrix(m, n);
    Matrix u = rng.normal_matrix(n, k);
    Matrix v = rng.normal_matrix(m, k);
    EXPECT_NEAR(trace_inner(matmul(a, u), v), trace_inner(u, matmul(transpose(a), v)), 1e-10);
  }
}

TEST(Properties, TraceInnerSymmetricBilinear) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = rng.normal_matrix(3, 4), b = rng.normal_matrix(3, 4), c = rng.normal_matrix(3, 4);
    const double s = rng.normal(), r = rng.normal();
    EXPECT_DOUBLE_EQ(trace_inner(a, b), trace_inner(b, a));
    EXPECT_NEAR(trace_inner(s * a + r * b, c), s * trace_inner(a, c) + r * trace_inner(b, c), 1e-12);
  }
}

TEST(Properties, MatmulAssociative) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.index(5), n = 1 + rng.index(5), p = 1 + rng.index(5), q = 1 + rng.index(5);
    Matrix a = rng.normal_matrix(m, n), b = rng.normal_matrix(n, p), c = rng.normal_matrix(p, q);
    EXPECT_LT(max_abs_difference(matmul(matmul(a, b), c).values(), matmul(a, matmul(b, c)).values()), 1e-10);
  }
}

TEST(Properties, HadamardCommutativeAssociative) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = rng.normal_matrix(2, 3), b = rng.normal_matrix(2, 3), c = rng.normal_matrix(2, 3);
    EXPECT_EQ(hadamard(a, b), hadamard(b, a));
    EXPECT_LT(max_abs_difference(hadamard(hadamard(a, b), c).values(), hadamard(a, hadamard(b, c)).values()),
              1e-14);
  }
}

TEST(Random, SplitStreamsAreReproducible) {
  Rng root(11);
  Rng a = root.split(3), b = root.split(3), c = root.split(4);
  const double x = a.normal();
  EXPECT_EQ(x, b.normal());
  EXPECT_NE(x, c.normal());
}

}  // namespace
}  // namespace dlk
