#include "dlk/optim.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "dlk/random.hpp"
#include "dlk/tensor.hpp"
#include "test_util.hpp"

namespace dlk {
namespace {

using test::oracles;

OptimizerConfig config(OptimizerKind kind, double lr) {
  OptimizerConfig c = OptimizerConfig::defaults(kind);
  c.learning_rate = lr;
  return c;
}

TEST(GdStep, ScalarParabola) {
  std::vector<double> x{1.0};
  x = gd_step(x, std::vector<double>{2.0 * x[0]}, 0.1);
  EXPECT_DOUBLE_EQ(x[0], 0.8);
  EXPECT_EQ(gd_step(x, std::vector<double>{0.0}, 0.1), x);
  x = {1.0};
  for (int i = 0; i < 50; ++i) x = gd_step(x, std::vector<double>{2.0 * x[0]}, 0.1);
  EXPECT_NEAR(x[0], std::pow(0.8, 50), 1e-12);
  EXPECT_NEAR(x[0], oracles()["optim"]["gd_x2_50"].get<double>(), 1e-12);
  EXPECT_THROW(gd_step(x, std::vector<double>{1.0, 2.0}, 0.1), ShapeError);
}

TEST(Momentum, FirstStepIsGdAndVelocityLimit) {
  Optimizer opt(config(OptimizerKind::Momentum, 0.01), 2);
  std::vector<double> x{1.0, -2.0}, g{0.5, 3.0};
  opt.step(x, g);
  EXPECT_EQ(x, gd_step(std::vector<double>{1.0, -2.0}, g, 0.01));

  const auto& f = oracles()["optim"]["momentum_velocity_200"];
  Optimizer constant(config(OptimizerKind::Momentum, f["alpha"]), 1);
  std::vector<double> y{0.0};
  for (int i = 0; i < 200; ++i) constant.step(y, std::vector<double>{f["g"].get<double>()});
  EXPECT_NEAR(constant.velocity()[0], f["limit"].get<double>(), 1e-6);
  EXPECT_NEAR(constant.velocity()[0], f["v"].get<double>(), 1e-14);
}

TEST(Momentum, GammaZeroIsGd) {
  OptimizerConfig c = config(OptimizerKind::Momentum, 0.05);
  c.gamma = 0.0;
  Optimizer opt(c, 3);
  Rng rng(1);
  std::vector<double> x{1, 2, 3}, ref = x;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> g{rng.normal(), rng.normal(), rng.normal()};
    opt.step(x, g);
    ref = gd_step(ref, g, 0.05);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(x[k], ref[k], 1e-15);
  }
}

TEST(RmsProp, FirstStepAndDecay) {
  OptimizerConfig c = config(OptimizerKind::RMSProp, 0.01);
  Optimizer opt(c, 1);
  std::vector<double> x{0.0};
  opt.step(x, std::vector<double>{2.0});
  EXPECT_DOUBLE_EQ(opt.second_moment()[0], 0.1 * 4.0);
  EXPECT_NEAR(x[0], -0.01 * 2.0 / std::sqrt(0.4 + 1e-8), 1e-15);
  const double before = x[0];
  opt.step(x, std::vector<double>{0.0});
  EXPECT_EQ(x[0], before);
  EXPECT_DOUBLE_EQ(opt.second_moment()[0], 0.9 * 0.4);
}

TEST(RmsProp, MatchesScalarSimulation) {
  Optimizer opt(config(OptimizerKind::RMSProp, 0.01), 1);
  std::vector<double> x{0.0};
  for (int i = 0; i < 100; ++i) opt.step(x, std::vector<double>{1.0});
  const auto& f = oracles()["optim"]["rmsprop_const_100"];
  EXPECT_NEAR(x[0], f["x"].get<double>(), 1e-12);
  EXPECT_NEAR(opt.second_moment()[0], f["e"].get<double>(), 1e-14);
}

TEST(RmsProp, FirstStepBoundedByRateOverRootOneMinusBeta) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Optimizer opt(config(OptimizerKind::RMSProp, 0.01), 1);
    std::vector<double> x{0.0};
    opt.step(x, std::vector<double>{rng.normal(0.0, 100.0)});
    EXPECT_LE(std::abs(x[0]), 0.01 / std::sqrt(1.0 - 0.9) + 1e-15);
  }
}

TEST(Adam, FirstStepIsSignedRate) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Optimizer opt(OptimizerConfig::defaults(OptimizerKind::Adam), 1);
    const double g = rng.normal(0.0, 10.0);
    std::vector<double> x{0.0};
    opt.step(x, std::vector<double>{g});
    EXPECT_NEAR(x[0], -0.001 * (g > 0 ? 1.0 : -1.0), 1e-9);
    EXPECT_EQ(opt.step_count(), 1u);
  }
}

TEST(Adam, MatchesScalarSimulationOnParabola) {
  OptimizerConfig c = config(OptimizerKind::Adam, 0.1);
  Optimizer opt(c, 1);
  std::vector<double> x{5.0};
  for (int i = 0; i < 500; ++i) opt.step(x, std::vector<double>{2.0 * x[0]});
  EXPECT_LT(std::abs(x[0]), 1e-2);
  EXPECT_NEAR(x[0], oracles()["optim"]["adam_x2_500"].get<double>(), 1e-12);
}

TEST(Adam, ZeroDecayLargeEpsilonIsScaledGd) {
  OptimizerConfig c = config(OptimizerKind::Adam, 1e6 * 0.01);
  c.beta1 = 0.0;
  c.beta2 = 0.0;
  c.epsilon = 1e6;
  Optimizer opt(c, 2);
  std::vector<double> x{1.0, -1.0}, ref = x;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> g{2 * x[0], 2 * x[1]};
    opt.step(x, g);
    ref = gd_step(ref, std::vector<double>{2 * ref[0], 2 * ref[1]}, 0.01);
  }
  EXPECT_NEAR(x[0], ref[0], 1e-6);
  EXPECT_NEAR(x[1], ref[1], 1e-6);
}

class AllKinds : public ::testing::TestWithParam<OptimizerKind> {};

TEST_P(AllKinds, ZeroGradientStreamLeavesParametersFixed) {
  Optimizer opt(OptimizerConfig::defaults(GetParam()), 4);
  std::vector<double> x{1, -2, 3, 0.5}, before = x, zero(4, 0.0);
  for (int i = 0; i < 100; ++i) opt.step(x, zero);
  EXPECT_EQ(x, before);
  EXPECT_EQ(opt.step_count(), 100u);
}

TEST_P(AllKinds, DrivesSquaredNormBelowThreshold) {
  Optimizer opt(OptimizerConfig::defaults(GetParam()), 10);
  Rng rng(4);
  std::vector<double> x(10);
  for (double& v : x) v = rng.normal();
  auto f = [&] {
    double s = 0;
    for (double v : x) s += v * v;
    return s;
  };
  int steps = 0;
  while (f() >= 1e-3 && steps < 10000) {
    std::vector<double> g(10);
    for (std::size_t i = 0; i < 10; ++i) g[i] = 2 * x[i];
    opt.step(x, g);
    ++steps;
  }
  EXPECT_LT(f(), 1e-3) << to_string(GetParam());
}

TEST_P(AllKinds, SecondMomentNonNegativeAndShapeChecked) {
  Optimizer opt(OptimizerConfig::defaults(GetParam()), 3);
  Rng rng(5);
  std::vector<double> x(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> g{rng.normal(), rng.normal(), rng.normal()};
    opt.step(x, g);
    for (double e : opt.second_moment()) EXPECT_GE(e, 0.0);
  }
  std::vector<double> bad(2);
  EXPECT_THROW(opt.step(x, bad), ShapeError);
}

INSTANTIATE_TEST_SUITE_P(Optim, AllKinds,
                         ::testing::Values(OptimizerKind::GD, OptimizerKind::Momentum, OptimizerKind::RMSProp,
                                           OptimizerKind::Adam),
                         [](const ::testing::TestParamInfo<OptimizerKind>& info) { return to_string(info.param); });

TEST(OptimizerConfig, DefaultsAndValidation) {
  EXPECT_EQ(OptimizerConfig::defaults(OptimizerKind::GD).learning_rate, 0.01);
  EXPECT_EQ(OptimizerConfig::defaults(OptimizerKind::Adam).learning_rate, 0.001);
  EXPECT_EQ(OptimizerConfig::defaults(OptimizerKind::Adam).beta2, 0.999);
  EXPECT_EQ(parse_optimizer_kind("rmsprop"), OptimizerKind::RMSProp);
  EXPECT_THROW(parse_optimizer_kind("sgd"), std::invalid_argument);
  OptimizerConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = OptimizerConfig{};
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace dlk
