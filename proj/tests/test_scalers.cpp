#include "dlk/scalers.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "dlk/random.hpp"
#include "test_util.hpp"

namespace dlk {
namespace {

Matrix column(std::initializer_list<double> values) { return Matrix::column(Vector(values)); }

TEST(Fit, MinMaxAndStandardStatistics) {
  ScalerParams mm = fit_scaler(column({0, 5, 10}), ScalerKind::MinMax);
  EXPECT_EQ(mm.lo[0], 0.0);
  EXPECT_EQ(mm.hi[0], 10.0);
  ScalerParams st = fit_scaler(column({-1, 1}), ScalerKind::Standard);
  EXPECT_EQ(st.lo[0], 0.0);
  EXPECT_EQ(st.hi[0], 1.0);
}

TEST(Fit, MatchesReferenceLoop) {
  const auto& f = test::oracles()["scalers"];
  const Matrix x = test::to_matrix(f["x"]);
  ScalerParams mm = fit_scaler(x, ScalerKind::MinMax);
  ScalerParams st = fit_scaler(x, ScalerKind::Standard);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(mm.lo[j], f["min"][j].get<double>());
    EXPECT_EQ(mm.hi[j], f["max"][j].get<double>());
    EXPECT_NEAR(st.lo[j], f["mean"][j].get<double>(), 1e-13);
    EXPECT_NEAR(st.hi[j], f["std"][j].get<double>(), 1e-13);
  }
}

TEST(Transform, Examples) {
  const Matrix a = column({0, 5, 10});
  EXPECT_EQ(transform(a, fit_scaler(a, ScalerKind::MinMax)), column({0, 0.5, 1}));
  const Matrix b = column({-1, 1});
  EXPECT_EQ(transform(b, fit_scaler(b, ScalerKind::Standard)), column({-1, 1}));
  const Matrix c = column({7, 7, 7});
  EXPECT_EQ(transform(c, fit_scaler(c, ScalerKind::MinMax)), column({0, 0, 0}));
  EXPECT_EQ(transform(c, fit_scaler(c, ScalerKind::Standard)), column({0, 0, 0}));
  EXPECT_THROW(transform(Matrix(2, 2), fit_scaler(a, ScalerKind::MinMax)), ShapeError);
}

TEST(Properties, StandardizedColumnsHaveZeroMeanUnitStd) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = rng.normal_matrix(2 + rng.index(30), 1 + rng.index(5), 1.0 + 10.0 * rng.uniform());
    Matrix z = transform(x, fit_scaler(x, ScalerKind::Standard));
    for (std::size_t j = 0; j < z.cols(); ++j) {
      double mean = 0, sq = 0;
      for (std::size_t i = 0; i < z.rows(); ++i) mean += z(i, j);
      mean /= static_cast<double>(z.rows());
      for (std::size_t i = 0; i < z.rows(); ++i) sq += (z(i, j) - mean) * (z(i, j) - mean);
      EXPECT_LT(std::abs(mean), 1e-10);
      EXPECT_NEAR(std::sqrt(sq / static_cast<double>(z.rows())), 1.0, 1e-10);
    }
  }
}

TEST(Properties, MinMaxAttainsBothEndsAndIsAffineInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = rng.normal_matrix(5 + rng.index(10), 3);
    Matrix z = transform(x, fit_scaler(x, ScalerKind::MinMax));
    for (std::size_t j = 0; j < 3; ++j) {
      double lo = 1, hi = 0;
      for (std::size_t i = 0; i < z.rows(); ++i) {
        lo = std::min(lo, z(i, j));
        hi = std::max(hi, z(i, j));
      }
      EXPECT_EQ(lo, 0.0);
      EXPECT_EQ(hi, 1.0);
    }
    const double a = 0.1 + 5 * rng.uniform(), b = rng.normal();
    Matrix y = map(x, [&](double v) { return a * v + b; });
    Matrix zy = transform(y, fit_scaler(y, ScalerKind::MinMax));
    EXPECT_LT(max_abs_difference(z.values(), zy.values()), 1e-12);
  }
}

}  // namespace
}  // namespace dlk
