#pragma once

// Recurrent cells over a single sequence of column vectors:
//
//   simple:  h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h),  y_t = φ(W_hy h_t + b_y)
//   LSTM:    forget/input/output gates, candidate c̃, c_t = f∗c_{t-1} + i∗c̃, h_t = o∗tanh(c_t)
//   GRU:     update/reset gates, h̃ = tanh(W x + U(r∗h) + b), h_t = (1−z)∗h_{t-1} + z∗h̃
//
// Index convention: x_t produces h_t and y_t (t = 0..T-1); the state before the
// first step is h_init (zero by default).
//
// Parameter gradients are returned in the same struct type as the parameters.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dlk/optim.hpp"
#include "dlk/random.hpp"
#include "dlk/tensor.hpp"

namespace dlk {

using Sequence = std::vector<Vector>;

enum class OutputKind { Identity, Softmax };
/// Per-step loss: mean squared error (1/O)Σ(ŷ−y)², or cross-entropy −Σ y log ŷ
/// (softmax outputs only). The sequence loss is the sum over steps.
enum class StepLoss { MeanSquared, CrossEntropy };

/// Output head y_t = φ(W h_t + b) shared by all cell kinds.
struct Readout {
  Matrix w;  // O x H
  Vector b;
  OutputKind output = OutputKind::Identity;

  static Readout random(std::size_t hidden, std::size_t outputs, OutputKind output, Rng& rng);
  static Readout zeros(std::size_t hidden, std::size_t outputs, OutputKind output);
  Vector apply(const Vector& h) const;
  std::vector<NamedBlock> blocks();
};

struct RnnCell {
  Matrix w_xh;  // H x D
  Matrix w_hh;  // H x H
  Matrix w_hy;  // O x H
  Vector b_h;
  Vector b_y;
  OutputKind output = OutputKind::Identity;

  static RnnCell random(std::size_t inputs, std::size_t hidden, std::size_t outputs, OutputKind output, Rng& rng);
  static RnnCell zeros(std::size_t inputs, std::size_t hidden, std::size_t outputs, OutputKind output);
  std::size_t input_size() const { return w_xh.cols(); }
  std::size_t hidden_size() const { return w_hh.rows(); }
  void validate() const;
  std::vector<NamedBlock> blocks();
};

struct RnnForward {
  Vector h_init;
  Sequence pre;      // a_t = W_xh x_t + W_hh h_{t-1} + b_h
  Sequence hidden;   // h_t
  Sequence outputs;  // y_t
};

RnnForward rnn_forward(const RnnCell& cell, const Sequence& inputs, const std::optional<Vector>& h_init = std::nullopt);

double sequence_loss(const Sequence& outputs, const Sequence& targets, StepLoss loss);

/// ∂L_t/∂h_t through the output head only (no recurrence).
Sequence local_hidden_gradients(const Readout& head, const Sequence& hidden, const Sequence& outputs,
                                const Sequence& targets, StepLoss loss);

struct RnnGradients {
  RnnCell params;
  Sequence hidden;  // total ∂L/∂h_t
  Vector h_init;
};

/// Backpropagation through time by the backward recursion
/// ∂L/∂h_t = ∂L_t/∂h_t + W_hhᵀ diag(tanh'(a_{t+1})) ∂L/∂h_{t+1}.
RnnGradients rnn_bptt(const RnnCell& cell, const Sequence& inputs, const RnnForward& fwd, const Sequence& targets,
                      StepLoss loss);

/// ∂h_k/∂h_t = Π_{j=t+1..k} diag(tanh'(a_j)) W_hh (identity when k == t).
Matrix hidden_jacobian(const RnnCell& cell, const RnnForward& fwd, std::size_t t, std::size_t k);

/// ∂L/∂h_t = Σ_{k≥t} (∂h_k/∂h_t)ᵀ ∂L_k/∂h_k, built from explicit Jacobian products.
Sequence hidden_gradients_by_products(const RnnCell& cell, const RnnForward& fwd, const Sequence& local);

/// Largest singular value by power iteration on MᵀM.
double spectral_norm(const Matrix& m, double tolerance = 1e-8);

/// ‖∂h_k/∂h_t‖₂ for k = t, t+1, ..., T-1.
std::vector<double> jacobian_norm_profile(const RnnCell& cell, const RnnForward& fwd, std::size_t t = 0);

struct GateParams {
  Matrix w;  // H x D
  Matrix u;  // H x H
  Vector b;

  static GateParams random(std::size_t inputs, std::size_t hidden, Rng& rng);
  static GateParams zeros(std::size_t inputs, std::size_t hidden);
  Vector preactivation(const Vector& x, const Vector& h) const;
};

struct LstmCell {
  GateParams forget, input, candidate, output;

  static LstmCell random(std::size_t inputs, std::size_t hidden, Rng& rng);
  static LstmCell zeros(std::size_t inputs, std::size_t hidden);
  std::size_t input_size() const { return forget.w.cols(); }
  std::size_t hidden_size() const { return forget.u.rows(); }
  std::vector<NamedBlock> blocks();
};

struct LstmStepCache {
  Vector x, h_prev, c_prev;
  Vector f, i, g, o;  // gates and candidate c̃
  Vector c, tanh_c;
};

struct LstmStep {
  Vector h;
  Vector c;
  LstmStepCache cache;
};

LstmStep lstm_step(const LstmCell& cell, const Vector& x, const Vector& h_prev, const Vector& c_prev);

struct StepInputGradients {
  Vector x;
  Vector h_prev;
  Vector c_prev;  // empty for GRU
};

/// Accumulates parameter gradients into `grads` given ∂L/∂h_t and ∂L/∂c_t.
StepInputGradients lstm_step_backward(const LstmCell& cell, const LstmStepCache& cache, const Vector& dh,
                                      const Vector& dc, LstmCell& grads);

struct GruCell {
  GateParams update, reset, candidate;

  static GruCell random(std::size_t inputs, std::size_t hidden, Rng& rng);
  static GruCell zeros(std::size_t inputs, std::size_t hidden);
  std::size_t input_size() const { return update.w.cols(); }
  std::size_t hidden_size() const { return update.u.rows(); }
  std::vector<NamedBlock> blocks();
};

struct GruStepCache {
  Vector x, h_prev;
  Vector z, r, n;  // n = h̃
};

struct GruStep {
  Vector h;
  GruStepCache cache;
};

GruStep gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev);
StepInputGradients gru_step_backward(const GruCell& cell, const GruStepCache& cache, const Vector& dh,
                                     GruCell& grads);

struct LstmForward {
  std::vector<LstmStep> steps;
  Sequence outputs;
};

LstmForward lstm_forward(const LstmCell& cell, const Readout& head, const Sequence& inputs);

struct LstmGradients {
  LstmCell cell;
  Readout head;
};

LstmGradients lstm_bptt(const LstmCell& cell, const Readout& head, const LstmForward& fwd, const Sequence& targets,
                        StepLoss loss);

struct GruForward {
  std::vector<GruStep> steps;
  Sequence outputs;
};

GruForward gru_forward(const GruCell& cell, const Readout& head, const Sequence& inputs);

struct GruGradients {
  GruCell cell;
  Readout head;
};

GruGradients gru_bptt(const GruCell& cell, const Readout& head, const GruForward& fwd, const Sequence& targets,
                      StepLoss loss);

// Training on a set of sequences.

enum class CellKind { Simple, Lstm, Gru };
CellKind parse_cell_kind(const std::string& name);

struct SequenceExample {
  Sequence inputs;
  Sequence targets;
};

/// One recurrent model of any cell kind with a flat parameter view.
class RecurrentModel {
 public:
  RecurrentModel(CellKind kind, std::size_t inputs, std::size_t hidden, std::size_t outputs, OutputKind output,
                 std::uint64_t seed);

  CellKind kind() const { return kind_; }
  /// Sequence loss and its gradient, flattened in block order.
  double loss_and_gradient(const SequenceExample& example, StepLoss loss, std::vector<double>& grad);
  double loss(const SequenceExample& example, StepLoss loss) const;
  Sequence predict(const Sequence& inputs) const;

  std::vector<NamedBlock> blocks();
  std::vector<double> flat_parameters();
  void assign_flat(std::span<const double> flat);
  std::size_t parameter_count();

  RnnCell& simple() { return simple_; }
  const RnnCell& simple() const { return simple_; }

 private:
  CellKind kind_;
  RnnCell simple_;
  LstmCell lstm_;
  GruCell gru_;
  Readout head_;
};

struct SequenceTrainOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  StepLoss loss = StepLoss::MeanSquared;
  OptimizerConfig optimizer = OptimizerConfig::defaults(OptimizerKind::Adam);
};

/// Mean per-sequence loss for each epoch; gradients are averaged over each batch of sequences.
std::vector<double> train_sequence_model(RecurrentModel& model, const std::vector<SequenceExample>& data,
                                         const SequenceTrainOptions& options);

}  // namespace dlk
