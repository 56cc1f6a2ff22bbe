#include "dlk/recurrent.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "dlk/checks.hpp"
#include "dlk/datasets.hpp"
#include "test_util.hpp"

namespace dlk {
namespace {

using test::oracles;
using test::to_matrix;
using test::to_vector;

Sequence rows_of(const test::json& rows) {
  Sequence s;
  for (const auto& r : rows) s.push_back(to_vector(r));
  return s;
}

Sequence scalars(std::initializer_list<double> values) {
  Sequence s;
  for (double v : values) s.push_back(Vector{v});
  return s;
}

RnnCell scalar_cell(double w_xh, double w_hh, double w_hy = 1.0, double b_h = 0.0, double b_y = 0.0) {
  RnnCell c = RnnCell::zeros(1, 1, 1, OutputKind::Identity);
  c.w_xh(0, 0) = w_xh;
  c.w_hh(0, 0) = w_hh;
  c.w_hy(0, 0) = w_hy;
  c.b_h[0] = b_h;
  c.b_y[0] = b_y;
  return c;
}

GateParams gate_from(const test::json& j) { return {to_matrix(j["w"]), to_matrix(j["u"]), to_vector(j["b"])}; }

void expect_gate_close(const GateParams& got, const test::json& want, double tol) {
  EXPECT_LT(test::max_rel_error(got.w.values(), to_matrix(want["w"]).values()), tol);
  EXPECT_LT(test::max_rel_error(got.u.values(), to_matrix(want["u"]).values()), tol);
  EXPECT_LT(test::max_rel_error(got.b.values(), to_vector(want["b"]).values()), tol);
}

TEST(RnnForward, ZeroWeightsAndSingleStep) {
  Rng rng(1);
  RnnCell zero = RnnCell::zeros(3, 4, 2, OutputKind::Identity);
  Sequence xs{rng.normal_vector(3), rng.normal_vector(3)};
  for (const Vector& h : rnn_forward(zero, xs).hidden)
    for (double v : h) EXPECT_EQ(v, 0.0);
  RnnCell cell = RnnCell::random(3, 4, 2, OutputKind::Identity, rng);
  RnnForward f = rnn_forward(cell, {xs[0]});
  Vector dense = map(add(matvec(cell.w_xh, xs[0]), cell.b_h), [](double a) { return std::tanh(a); });
  EXPECT_EQ(f.hidden[0], dense);
  EXPECT_THROW(rnn_forward(cell, {Vector(2)}), ShapeError);
}

TEST(RnnForward, ScalarHandUnrolling) {
  const auto& f = oracles()["recurrent"]["scalar_rnn"];
  RnnCell c = scalar_cell(f["w_xh"], f["w_hh"], f["w_hy"], f["b_h"], f["b_y"]);
  Sequence xs;
  for (double v : f["x"]) xs.push_back(Vector{v});
  RnnForward out = rnn_forward(c, xs);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_NEAR(out.hidden[t][0], f["h"][t].get<double>(), 1e-12);
    EXPECT_NEAR(out.outputs[t][0], f["y"][t].get<double>(), 1e-12);
  }
}

TEST(RnnBptt, MatchesAutogradOracle) {
  const auto& r = oracles()["recurrent"];
  const auto& f = r["rnn"];
  RnnCell c{to_matrix(f["w_xh"]), to_matrix(f["w_hh"]), to_matrix(f["w_hy"]), to_vector(f["b_h"]),
            to_vector(f["b_y"]), OutputKind::Identity};
  Sequence xs = rows_of(r["inputs"]), ys = rows_of(r["targets"]);
  RnnForward fwd = rnn_forward(c, xs);
  EXPECT_NEAR(sequence_loss(fwd.outputs, ys, StepLoss::MeanSquared), f["loss"].get<double>(), 1e-13);
  RnnGradients g = rnn_bptt(c, xs, fwd, ys, StepLoss::MeanSquared);
  EXPECT_LT(test::max_rel_error(g.params.w_xh.values(), to_matrix(f["grad"][0]).values()), 1e-11);
  EXPECT_LT(test::max_rel_error(g.params.w_hh.values(), to_matrix(f["grad"][1]).values()), 1e-11);
  EXPECT_LT(test::max_rel_error(g.params.w_hy.values(), to_matrix(f["grad"][2]).values()), 1e-11);
  EXPECT_LT(test::max_rel_error(g.params.b_h.values(), to_vector(f["grad"][3]).values()), 1e-11);
  EXPECT_LT(test::max_rel_error(g.params.b_y.values(), to_vector(f["grad"][4]).values()), 1e-11);
}

TEST(RnnBptt, SingleStepIsDenseLayer) {
  Rng rng(2);
  RnnCell c = RnnCell::random(3, 4, 2, OutputKind::Identity, rng);
  Sequence xs{rng.normal_vector(3)}, ys{rng.normal_vector(2)};
  RnnForward f = rnn_forward(c, xs);
  RnnGradients g = rnn_bptt(c, xs, f, ys, StepLoss::MeanSquared);
  // dL/dy = 2(y − t)/O; dL/da = (W_hyᵀ dL/dy) ∗ (1 − h²); dW_xh = dL/da xᵀ.
  Vector dy = scale(subtract(f.outputs[0], ys[0]), 2.0 / 2.0);
  Vector da = hadamard(matvec_transposed(c.w_hy, dy), map(f.hidden[0], [](double h) { return 1 - h * h; }));
  EXPECT_LT(max_abs_difference(g.params.w_xh.values(), outer(da, xs[0]).values()), 1e-15);
  EXPECT_LT(max_abs_difference(g.params.b_h.values(), da.values()), 1e-15);
  EXPECT_LT(max_abs_difference(g.params.w_hy.values(), outer(dy, f.hidden[0]).values()), 1e-15);
  for (double v : g.params.w_hh.values()) EXPECT_EQ(v, 0.0);
}

TEST(RnnBptt, RecursionEqualsSumOfJacobianProducts) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t hidden = trial < 10 ? 1 : 1 + rng.index(4);
    RnnCell c = RnnCell::random(1 + rng.index(3), hidden, 1 + rng.index(2), OutputKind::Identity, rng);
    const std::size_t steps = 1 + rng.index(6);
    Sequence xs, ys;
    for (std::size_t t = 0; t < steps; ++t) {
      xs.push_back(rng.normal_vector(c.input_size()));
      ys.push_back(rng.normal_vector(c.w_hy.rows()));
    }
    RnnForward f = rnn_forward(c, xs);
    RnnGradients g = rnn_bptt(c, xs, f, ys, StepLoss::MeanSquared);
    Readout head{c.w_hy, c.b_y, c.output};
    Sequence local = local_hidden_gradients(head, f.hidden, f.outputs, ys, StepLoss::MeanSquared);
    Sequence products = hidden_gradients_by_products(c, f, local);
    for (std::size_t t = 0; t < steps; ++t) {
      EXPECT_LT(max_abs_difference(g.hidden[t].values(), products[t].values()), 1e-12);
    }
  }
}

TEST(RnnBptt, MatchesFiniteDifferences) {
  SuiteResult r = run_check_suite("rnn", 30, 7);
  EXPECT_TRUE(r.report.pass) << r.report.max_rel_error << " in " << r.report.worst_block;
}

TEST(JacobianProfile, ZeroRecurrenceVanishes) {
  Rng rng(4);
  RnnCell c = RnnCell::random(2, 3, 1, OutputKind::Identity, rng);
  c.w_hh = Matrix(3, 3);
  Sequence xs(5, Vector{0.3, -0.2});
  std::vector<double> profile = jacobian_norm_profile(c, rnn_forward(c, xs));
  ASSERT_EQ(profile.size(), 5u);
  EXPECT_NEAR(profile[0], 1.0, 1e-8);
  for (std::size_t k = 1; k < profile.size(); ++k) EXPECT_EQ(profile[k], 0.0);
}

TEST(JacobianProfile, ScalarContractionBound) {
  Rng rng(5);
  RnnCell c = scalar_cell(0.7, 0.5);
  Sequence xs;
  for (int t = 0; t < 12; ++t) xs.push_back(Vector{rng.normal()});
  RnnForward f = rnn_forward(c, xs);
  std::vector<double> profile = jacobian_norm_profile(c, f);
  for (std::size_t k = 0; k < profile.size(); ++k) {
    EXPECT_LE(profile[k], std::pow(0.5, static_cast<double>(k)) + 1e-12);
    if (k > 0) EXPECT_LE(profile[k], profile[k - 1]);
  }
  EXPECT_LE(std::abs(hidden_jacobian(c, f, 0, 11)(0, 0)), std::pow(0.5, 11));
}

TEST(JacobianProfile, ExplodingNearLinearRegime) {
  RnnCell c = RnnCell::zeros(1, 3, 1, OutputKind::Identity);
  c.w_hh = scale(Matrix::identity(3), 1.5);
  for (std::size_t i = 0; i < 3; ++i) c.w_xh(i, 0) = 1e-3;
  Sequence xs(11, Vector{1e-3});
  std::vector<double> profile = jacobian_norm_profile(c, rnn_forward(c, xs));
  for (std::size_t k = 1; k < profile.size(); ++k) {
    const double expected = std::pow(1.5, static_cast<double>(k));
    EXPECT_NEAR(profile[k] / expected, 1.0, 0.1);
  }
}

TEST(JacobianProfile, MonotoneWhenSpectralNormBelowOne) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    RnnCell c = RnnCell::random(2, 4, 1, OutputKind::Identity, rng);
    c.w_hh = scale(c.w_hh, 0.9 / spectral_norm(c.w_hh));
    Sequence xs;
    for (int t = 0; t < 8; ++t) xs.push_back(rng.normal_vector(2));
    std::vector<double> profile = jacobian_norm_profile(c, rnn_forward(c, xs));
    for (std::size_t k = 1; k < profile.size(); ++k) EXPECT_LE(profile[k], profile[k - 1] * (1 + 1e-8));
  }
}

TEST(SpectralNorm, KnownMatrices) {
  EXPECT_NEAR(spectral_norm(Matrix::from_rows({{3.0, 0.0}, {0.0, -5.0}})), 5.0, 1e-8);
  EXPECT_NEAR(spectral_norm(Matrix::from_rows({{1.0, 1.0}, {0.0, 0.0}})), std::sqrt(2.0), 1e-8);
  EXPECT_EQ(spectral_norm(Matrix(3, 3)), 0.0);
}

TEST(LstmStep, ZeroWeights) {
  LstmCell c = LstmCell::zeros(2, 3);
  Vector c_prev{1.0, -2.0, 0.5};
  LstmStep s = lstm_step(c, Vector{0.3, 0.1}, Vector{0.2, 0.2, 0.2}, c_prev);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(s.cache.f[i], 0.5);
    EXPECT_DOUBLE_EQ(s.cache.i[i], 0.5);
    EXPECT_DOUBLE_EQ(s.cache.o[i], 0.5);
    EXPECT_DOUBLE_EQ(s.cache.g[i], 0.0);
    EXPECT_DOUBLE_EQ(s.c[i], 0.5 * c_prev[i]);
    EXPECT_DOUBLE_EQ(s.h[i], 0.5 * std::tanh(0.5 * c_prev[i]));
  }
}

TEST(LstmStep, SaturatedGatesCarryMemory) {
  Rng rng(7);
  LstmCell c = LstmCell::random(2, 3, rng);
  c.forget.b = Vector(3, 20.0);
  c.input.b = Vector(3, -20.0);
  Vector cell{0.7, -1.3, 2.0}, h(3);
  for (int t = 0; t < 100; ++t) {
    LstmStep s = lstm_step(c, rng.normal_vector(2), h, cell);
    EXPECT_LT(max_abs_difference(s.c.values(), cell.values()), 1e-6);
    for (double v : s.h) EXPECT_LE(std::abs(v), 1.0);
    cell = s.c;
    h = s.h;
  }
}

TEST(LstmBptt, MatchesAutogradOracle) {
  const auto& r = oracles()["recurrent"];
  const auto& f = r["lstm"];
  LstmCell c{gate_from(f["cell"]["forget"]), gate_from(f["cell"]["input"]), gate_from(f["cell"]["candidate"]),
             gate_from(f["cell"]["output"])};
  Readout head{to_matrix(f["head_w"]), to_vector(f["head_b"]), OutputKind::Identity};
  Sequence xs = rows_of(r["inputs"]), ys = rows_of(r["targets"]);
  LstmForward fwd = lstm_forward(c, head, xs);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    EXPECT_LT(max_abs_difference(fwd.steps[t].h.values(), to_vector(f["h"][t]).values()), 1e-14);
    EXPECT_LT(max_abs_difference(fwd.steps[t].c.values(), to_vector(f["c"][t]).values()), 1e-14);
  }
  EXPECT_NEAR(sequence_loss(fwd.outputs, ys, StepLoss::MeanSquared), f["loss"].get<double>(), 1e-13);
  LstmGradients g = lstm_bptt(c, head, fwd, ys, StepLoss::MeanSquared);
  expect_gate_close(g.cell.forget, f["grad"]["forget"], 1e-10);
  expect_gate_close(g.cell.input, f["grad"]["input"], 1e-10);
  expect_gate_close(g.cell.candidate, f["grad"]["candidate"], 1e-10);
  expect_gate_close(g.cell.output, f["grad"]["output"], 1e-10);
  EXPECT_LT(test::max_rel_error(g.head.w.values(), to_matrix(f["grad_head_w"]).values()), 1e-12);
  EXPECT_LT(test::max_rel_error(g.head.b.values(), to_vector(f["grad_head_b"]).values()), 1e-12);
}

TEST(GruStep, ZeroWeightsAndSaturation) {
  GruCell c = GruCell::zeros(2, 3);
  Vector h_prev{0.4, -0.6, 1.0};
  GruStep s = gru_step(c, Vector{1.0, 1.0}, h_prev);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(s.cache.z[i], 0.5);
    EXPECT_DOUBLE_EQ(s.cache.r[i], 0.5);
    EXPECT_DOUBLE_EQ(s.cache.n[i], 0.0);
    EXPECT_DOUBLE_EQ(s.h[i], 0.5 * h_prev[i]);
  }
  Rng rng(8);
  GruCell r = GruCell::random(2, 3, rng);
  r.update.b = Vector(3, -20.0);
  GruStep held = gru_step(r, rng.normal_vector(2), h_prev);
  EXPECT_LT(max_abs_difference(held.h.values(), h_prev.values()), 1e-6);
}

TEST(GruBptt, MatchesAutogradOracle) {
  const auto& r = oracles()["recurrent"];
  const auto& f = r["gru"];
  GruCell c{gate_from(f["cell"]["update"]), gate_from(f["cell"]["reset"]), gate_from(f["cell"]["candidate"])};
  Readout head{to_matrix(f["head_w"]), to_vector(f["head_b"]), OutputKind::Identity};
  Sequence xs = rows_of(r["inputs"]), ys = rows_of(r["targets"]);
  GruForward fwd = gru_forward(c, head, xs);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    EXPECT_LT(max_abs_difference(fwd.steps[t].h.values(), to_vector(f["h"][t]).values()), 1e-14);
  }
  EXPECT_NEAR(sequence_loss(fwd.outputs, ys, StepLoss::MeanSquared), f["loss"].get<double>(), 1e-13);
  GruGradients g = gru_bptt(c, head, fwd, ys, StepLoss::MeanSquared);
  expect_gate_close(g.cell.update, f["grad"]["update"], 1e-10);
  expect_gate_close(g.cell.reset, f["grad"]["reset"], 1e-10);
  expect_gate_close(g.cell.candidate, f["grad"]["candidate"], 1e-10);
  EXPECT_LT(test::max_rel_error(g.head.w.values(), to_matrix(f["grad_head_w"]).values()), 1e-12);
}

TEST(GatedCells, OutputsBoundedByOne) {
  Rng rng(9);
  LstmCell l = LstmCell::random(3, 4, rng);
  GruCell g = GruCell::random(3, 4, rng);
  Vector lh(4), lc(4), gh(4);
  for (int t = 0; t < 50; ++t) {
    Vector x = rng.normal_vector(3, 5.0);
    LstmStep ls = lstm_step(l, x, lh, lc);
    GruStep gs = gru_step(g, x, gh);
    lh = ls.h;
    lc = ls.c;
    gh = gs.h;
    for (double v : lh) EXPECT_LE(std::abs(v), 1.0);
    for (double v : gh) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(GatedCells, BpttMatchesFiniteDifferences) {
  for (const char* suite : {"lstm", "gru"}) {
    SuiteResult r = run_check_suite(suite, 30, 11);
    EXPECT_TRUE(r.report.pass) << suite << ": " << r.report.max_rel_error << " in " << r.report.worst_block;
  }
}

TEST(Training, CopyTaskLossDecreases) {
  std::vector<SequenceExample> data = make_copy_sequence(32, 6, 1, 3);
  for (CellKind kind : {CellKind::Simple, CellKind::Lstm, CellKind::Gru}) {
    RecurrentModel model(kind, 1, 8, 1, OutputKind::Identity, 4);
    SequenceTrainOptions opts;
    opts.epochs = 40;
    opts.optimizer.learning_rate = 0.01;
    std::vector<double> history = train_sequence_model(model, data, opts);
    ASSERT_EQ(history.size(), 40u);
    EXPECT_LT(history.back(), 0.5 * history.front());
  }
  EXPECT_EQ(parse_cell_kind("gru"), CellKind::Gru);
  EXPECT_THROW(parse_cell_kind("rnn"), std::invalid_argument);
}

}  // namespace
}  // namespace dlk
