#include "dlk/recurrent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "dlk/linear.hpp"
#include "dlk/mlp.hpp"

namespace dlk {

namespace {

double scaled_init(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Vector tanh_vec(const Vector& v) { return map(v, [](double a) { return std::tanh(a); }); }
Vector sigmoid_vec(const Vector& v) { return map(v, [](double a) { return sigmoid(a); }); }

void require_len(const Vector& v, std::size_t n, const char* what) {
  if (v.size() != n) throw ShapeError(fmt::format("{}: expected length {}, got {}", what, n, v.size()));
}

Vector output_activation(const Vector& logits, OutputKind kind) {
  return kind == OutputKind::Softmax ? softmax(logits) : logits;
}

/// ∂L_t/∂(logits) for one step.
Vector logit_gradient(const Vector& y_hat, const Vector& target, OutputKind kind, StepLoss loss) {
  require_len(target, y_hat.size(), "target");
  if (loss == StepLoss::CrossEntropy) {
    if (kind != OutputKind::Softmax) throw std::invalid_argument("cross-entropy step loss needs softmax outputs");
    return subtract(y_hat, target);
  }
  const double inv = 2.0 / static_cast<double>(y_hat.size());
  Vector d_out = scale(subtract(y_hat, target), inv);
  if (kind == OutputKind::Softmax) return matvec(softmax_jacobian(y_hat), d_out);
  return d_out;
}

void accumulate_gate(GateParams& g, const Vector& da, const Vector& x, const Vector& h) {
  add_inplace(g.w, outer(da, x));
  add_inplace(g.u, outer(da, h));
  add_inplace(g.b, da);
}

void push_blocks(std::vector<NamedBlock>& out, const std::string& prefix, GateParams& g) {
  out.push_back({prefix + ".W", g.w.values()});
  out.push_back({prefix + ".U", g.u.values()});
  out.push_back({prefix + ".b", g.b.values()});
}

}  // namespace

Readout Readout::random(std::size_t hidden, std::size_t outputs, OutputKind output, Rng& rng) {
  return {rng.normal_matrix(outputs, hidden, scaled_init(hidden)), Vector(outputs), output};
}

Readout Readout::zeros(std::size_t hidden, std::size_t outputs, OutputKind output) {
  return {Matrix(outputs, hidden), Vector(outputs), output};
}

Vector Readout::apply(const Vector& h) const { return output_activation(add(matvec(w, h), b), output); }

std::vector<NamedBlock> Readout::blocks() { return {{"W_hy", w.values()}, {"b_y", b.values()}}; }

RnnCell RnnCell::random(std::size_t inputs, std::size_t hidden, std::size_t outputs, OutputKind output, Rng& rng) {
  RnnCell c;
  c.w_xh = rng.normal_matrix(hidden, inputs, scaled_init(inputs));
  c.w_hh = rng.normal_matrix(hidden, hidden, scaled_init(hidden));
  c.w_hy = rng.normal_matrix(outputs, hidden, scaled_init(hidden));
  c.b_h = Vector(hidden);
  c.b_y = Vector(outputs);
  c.output = output;
  return c;
}

RnnCell RnnCell::zeros(std::size_t inputs, std::size_t hidden, std::size_t outputs, OutputKind output) {
  return {Matrix(hidden, inputs), Matrix(hidden, hidden), Matrix(outputs, hidden), Vector(hidden), Vector(outputs),
          output};
}

void RnnCell::validate() const {
  const std::size_t h = w_hh.rows();
  if (w_hh.cols() != h) throw ShapeError(fmt::format("W_hh must be square, got {}", w_hh.shape_string()));
  if (w_xh.rows() != h) throw ShapeError(fmt::format("W_xh {} does not map into hidden size {}", w_xh.shape_string(), h));
  if (w_hy.cols() != h) throw ShapeError(fmt::format("W_hy {} does not read hidden size {}", w_hy.shape_string(), h));
  require_len(b_h, h, "b_h");
  require_len(b_y, w_hy.rows(), "b_y");
}

std::vector<NamedBlock> RnnCell::blocks() {
  return {{"W_xh", w_xh.values()}, {"W_hh", w_hh.values()}, {"W_hy", w_hy.values()}, {"b_h", b_h.values()},
          {"b_y", b_y.values()}};
}

RnnForward rnn_forward(const RnnCell& cell, const Sequence& inputs, const std::optional<Vector>& h_init) {
  cell.validate();
  if (inputs.empty()) throw std::invalid_argument("rnn_forward: empty sequence");
  RnnForward f;
  f.h_init = h_init.value_or(Vector(cell.hidden_size()));
  require_len(f.h_init, cell.hidden_size(), "h_init");
  const Vector* h_prev = &f.h_init;
  f.pre.reserve(inputs.size());
  f.hidden.reserve(inputs.size());
  for (const Vector& x : inputs) {
    require_len(x, cell.input_size(), "rnn input");
    Vector a = add(add(matvec(cell.w_xh, x), matvec(cell.w_hh, *h_prev)), cell.b_h);
    f.hidden.push_back(tanh_vec(a));
    f.pre.push_back(std::move(a));
    f.outputs.push_back(output_activation(add(matvec(cell.w_hy, f.hidden.back()), cell.b_y), cell.output));
    h_prev = &f.hidden.back();
  }
  return f;
}

double sequence_loss(const Sequence& outputs, const Sequence& targets, StepLoss loss) {
  if (outputs.size() != targets.size()) {
    throw ShapeError(fmt::format("sequence_loss: {} outputs, {} targets", outputs.size(), targets.size()));
  }
  double total = 0.0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    require_len(targets[t], outputs[t].size(), "target");
    if (loss == StepLoss::MeanSquared) {
      double sq = 0.0;
      for (std::size_t k = 0; k < outputs[t].size(); ++k) sq += (outputs[t][k] - targets[t][k]) * (outputs[t][k] - targets[t][k]);
      total += sq / static_cast<double>(outputs[t].size());
    } else {
      for (std::size_t k = 0; k < outputs[t].size(); ++k) {
        if (targets[t][k] != 0.0) {
          total -= targets[t][k] * std::log(std::clamp(outputs[t][k], kProbabilityClip, 1.0 - kProbabilityClip));
        }
      }
    }
  }
  return total;
}

Sequence local_hidden_gradients(const Readout& head, const Sequence& hidden, const Sequence& outputs,
                                const Sequence& targets, StepLoss loss) {
  if (targets.size() != outputs.size()) {
    throw ShapeError(fmt::format("{} targets for {} steps", targets.size(), outputs.size()));
  }
  Sequence local;
  local.reserve(hidden.size());
  for (std::size_t t = 0; t < hidden.size(); ++t) {
    local.push_back(matvec_transposed(head.w, logit_gradient(outputs[t], targets[t], head.output, loss)));
  }
  return local;
}

RnnGradients rnn_bptt(const RnnCell& cell, const Sequence& inputs, const RnnForward& fwd, const Sequence& targets,
                      StepLoss loss) {
  const std::size_t steps = inputs.size();
  if (fwd.hidden.size() != steps || fwd.pre.size() != steps) {
    throw std::invalid_argument(fmt::format("rnn_bptt: cache holds {} steps, sequence has {}", fwd.hidden.size(), steps));
  }
  if (targets.size() != steps) throw ShapeError(fmt::format("rnn_bptt: {} targets for {} steps", targets.size(), steps));
  RnnGradients g;
  g.params = RnnCell::zeros(cell.input_size(), cell.hidden_size(), cell.w_hy.rows(), cell.output);
  g.hidden.resize(steps);

  Vector carry(cell.hidden_size());  // ∂L/∂h_t arriving from step t+1
  for (std::size_t t = steps; t-- > 0;) {
    const Vector d_logit = logit_gradient(fwd.outputs[t], targets[t], cell.output, loss);
    add_inplace(g.params.w_hy, outer(d_logit, fwd.hidden[t]));
    add_inplace(g.params.b_y, d_logit);
    Vector dh = add(matvec_transposed(cell.w_hy, d_logit), carry);
    g.hidden[t] = dh;
    Vector da = dh;
    for (std::size_t k = 0; k < da.size(); ++k) da[k] *= 1.0 - fwd.hidden[t][k] * fwd.hidden[t][k];
    const Vector& h_prev = t == 0 ? fwd.h_init : fwd.hidden[t - 1];
    add_inplace(g.params.w_xh, outer(da, inputs[t]));
    add_inplace(g.params.w_hh, outer(da, h_prev));
    add_inplace(g.params.b_h, da);
    carry = matvec_transposed(cell.w_hh, da);
  }
  g.h_init = carry;
  return g;
}

Matrix hidden_jacobian(const RnnCell& cell, const RnnForward& fwd, std::size_t t, std::size_t k) {
  if (k < t || k >= fwd.hidden.size()) {
    throw std::invalid_argument(fmt::format("hidden_jacobian: need t <= k < {}, got t={}, k={}", fwd.hidden.size(), t, k));
  }
  Matrix acc = Matrix::identity(cell.hidden_size());
  for (std::size_t j = t + 1; j <= k; ++j) {
    Matrix step = cell.w_hh;
    for (std::size_t r = 0; r < step.rows(); ++r) {
      const double d = 1.0 - fwd.hidden[j][r] * fwd.hidden[j][r];
      for (double& v : step.row(r)) v *= d;
    }
    acc = matmul(step, acc);
  }
  return acc;
}

Sequence hidden_gradients_by_products(const RnnCell& cell, const RnnForward& fwd, const Sequence& local) {
  const std::size_t steps = fwd.hidden.size();
  if (local.size() != steps) throw ShapeError("hidden_gradients_by_products: one local gradient per step required");
  Sequence total(steps, Vector(cell.hidden_size()));
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t k = t; k < steps; ++k) add_inplace(total[t], matvec_transposed(hidden_jacobian(cell, fwd, t, k), local[k]));
  return total;
}

double spectral_norm(const Matrix& m, double tolerance) {
  const Matrix gram = matmul(transpose(m), m);
  Vector v(gram.cols(), 1.0 / std::sqrt(static_cast<double>(gram.cols())));
  // Fixed start vector can be orthogonal to the top eigenvector; nudge it off-axis.
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 1e-3 * static_cast<double>(i + 1);
  double lambda = 0.0;
  for (int iter = 0; iter < 10000; ++iter) {
    Vector w = matvec(gram, v);
    const double len = norm(w);
    if (len == 0.0) return 0.0;
    const double next = dot(v, w) / dot(v, v);
    v = scale(w, 1.0 / len);
    if (std::abs(next - lambda) <= tolerance * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

std::vector<double> jacobian_norm_profile(const RnnCell& cell, const RnnForward& fwd, std::size_t t) {
  std::vector<double> out;
  for (std::size_t k = t; k < fwd.hidden.size(); ++k) out.push_back(spectral_norm(hidden_jacobian(cell, fwd, t, k)));
  return out;
}

GateParams GateParams::random(std::size_t inputs, std::size_t hidden, Rng& rng) {
  return {rng.normal_matrix(hidden, inputs, scaled_init(inputs)), rng.normal_matrix(hidden, hidden, scaled_init(hidden)),
          Vector(hidden)};
}

GateParams GateParams::zeros(std::size_t inputs, std::size_t hidden) {
  return {Matrix(hidden, inputs), Matrix(hidden, hidden), Vector(hidden)};
}

Vector GateParams::preactivation(const Vector& x, const Vector& h) const {
  return add(add(matvec(w, x), matvec(u, h)), b);
}

LstmCell LstmCell::random(std::size_t inputs, std::size_t hidden, Rng& rng) {
  LstmCell c;
  c.forget = GateParams::random(inputs, hidden, rng);
  c.input = GateParams::random(inputs, hidden, rng);
  c.candidate = GateParams::random(inputs, hidden, rng);
  c.output = GateParams::random(inputs, hidden, rng);
  return c;
}

LstmCell LstmCell::zeros(std::size_t inputs, std::size_t hidden) {
  const GateParams z = GateParams::zeros(inputs, hidden);
  return {z, z, z, z};
}

std::vector<NamedBlock> LstmCell::blocks() {
  std::vector<NamedBlock> out;
  push_blocks(out, "forget", forget);
  push_blocks(out, "input", input);
  push_blocks(out, "candidate", candidate);
  push_blocks(out, "output", output);
  return out;
}

LstmStep lstm_step(const LstmCell& cell, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
  require_len(x, cell.input_size(), "lstm input");
  require_len(h_prev, cell.hidden_size(), "lstm h_prev");
  require_len(c_prev, cell.hidden_size(), "lstm c_prev");
  LstmStep s;
  LstmStepCache& k = s.cache;
  k.x = x;
  k.h_prev = h_prev;
  k.c_prev = c_prev;
  k.f = sigmoid_vec(cell.forget.preactivation(x, h_prev));
  k.i = sigmoid_vec(cell.input.preactivation(x, h_prev));
  k.g = tanh_vec(cell.candidate.preactivation(x, h_prev));
  k.o = sigmoid_vec(cell.output.preactivation(x, h_prev));
  k.c = add(hadamard(k.f, c_prev), hadamard(k.i, k.g));
  k.tanh_c = tanh_vec(k.c);
  s.c = k.c;
  s.h = hadamard(k.o, k.tanh_c);
  return s;
}

StepInputGradients lstm_step_backward(const LstmCell& cell, const LstmStepCache& k, const Vector& dh,
                                      const Vector& dc, LstmCell& grads) {
  const std::size_t n = cell.hidden_size();
  require_len(dh, n, "lstm dh");
  require_len(dc, n, "lstm dc");
  Vector dc_total(n), da_f(n), da_i(n), da_g(n), da_o(n);
  StepInputGradients out{Vector(cell.input_size()), Vector(n), Vector(n)};
  for (std::size_t j = 0; j < n; ++j) {
    dc_total[j] = dc[j] + dh[j] * k.o[j] * (1.0 - k.tanh_c[j] * k.tanh_c[j]);
    const double d_o = dh[j] * k.tanh_c[j];
    da_o[j] = d_o * k.o[j] * (1.0 - k.o[j]);
    da_f[j] = dc_total[j] * k.c_prev[j] * k.f[j] * (1.0 - k.f[j]);
    da_i[j] = dc_total[j] * k.g[j] * k.i[j] * (1.0 - k.i[j]);
    da_g[j] = dc_total[j] * k.i[j] * (1.0 - k.g[j] * k.g[j]);
    out.c_prev[j] = dc_total[j] * k.f[j];
  }
  const std::pair<const GateParams*, const Vector*> gates[] = {
      {&cell.forget, &da_f}, {&cell.input, &da_i}, {&cell.candidate, &da_g}, {&cell.output, &da_o}};
  GateParams* grad_gates[] = {&grads.forget, &grads.input, &grads.candidate, &grads.output};
  for (std::size_t q = 0; q < 4; ++q) {
    const GateParams& p = *gates[q].first;
    const Vector& da = *gates[q].second;
    accumulate_gate(*grad_gates[q], da, k.x, k.h_prev);
    add_inplace(out.x, matvec_transposed(p.w, da));
    add_inplace(out.h_prev, matvec_transposed(p.u, da));
  }
  return out;
}

GruCell GruCell::random(std::size_t inputs, std::size_t hidden, Rng& rng) {
  GruCell c;
  c.update = GateParams::random(inputs, hidden, rng);
  c.reset = GateParams::random(inputs, hidden, rng);
  c.candidate = GateParams::random(inputs, hidden, rng);
  return c;
}

GruCell GruCell::zeros(std::size_t inputs, std::size_t hidden) {
  const GateParams z = GateParams::zeros(inputs, hidden);
  return {z, z, z};
}

std::vector<NamedBlock> GruCell::blocks() {
  std::vector<NamedBlock> out;
  push_blocks(out, "update", update);
  push_blocks(out, "reset", reset);
  push_blocks(out, "candidate", candidate);
  return out;
}

GruStep gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev) {
  require_len(x, cell.input_size(), "gru input");
  require_len(h_prev, cell.hidden_size(), "gru h_prev");
  GruStep s;
  GruStepCache& k = s.cache;
  k.x = x;
  k.h_prev = h_prev;
  k.z = sigmoid_vec(cell.update.preactivation(x, h_prev));
  k.r = sigmoid_vec(cell.reset.preactivation(x, h_prev));
  k.n = tanh_vec(cell.candidate.preactivation(x, hadamard(k.r, h_prev)));
  s.h = Vector(h_prev.size());
  for (std::size_t j = 0; j < h_prev.size(); ++j) s.h[j] = (1.0 - k.z[j]) * h_prev[j] + k.z[j] * k.n[j];
  return s;
}

StepInputGradients gru_step_backward(const GruCell& cell, const GruStepCache& k, const Vector& dh, GruCell& grads) {
  const std::size_t n = cell.hidden_size();
  require_len(dh, n, "gru dh");
  StepInputGradients out{Vector(cell.input_size()), Vector(n), Vector()};
  Vector da_n(n), da_z(n);
  for (std::size_t j = 0; j < n; ++j) {
    out.h_prev[j] = dh[j] * (1.0 - k.z[j]);
    da_z[j] = dh[j] * (k.n[j] - k.h_prev[j]) * k.z[j] * (1.0 - k.z[j]);
    da_n[j] = dh[j] * k.z[j] * (1.0 - k.n[j] * k.n[j]);
  }
  const Vector rh = hadamard(k.r, k.h_prev);
  accumulate_gate(grads.candidate, da_n, k.x, rh);
  add_inplace(out.x, matvec_transposed(cell.candidate.w, da_n));
  const Vector d_rh = matvec_transposed(cell.candidate.u, da_n);
  Vector da_r(n);
  for (std::size_t j = 0; j < n; ++j) {
    out.h_prev[j] += d_rh[j] * k.r[j];
    da_r[j] = d_rh[j] * k.h_prev[j] * k.r[j] * (1.0 - k.r[j]);
  }
  accumulate_gate(grads.update, da_z, k.x, k.h_prev);
  accumulate_gate(grads.reset, da_r, k.x, k.h_prev);
  add_inplace(out.x, add(matvec_transposed(cell.update.w, da_z), matvec_transposed(cell.reset.w, da_r)));
  add_inplace(out.h_prev, add(matvec_transposed(cell.update.u, da_z), matvec_transposed(cell.reset.u, da_r)));
  return out;
}

LstmForward lstm_forward(const LstmCell& cell, const Readout& head, const Sequence& inputs) {
  if (inputs.empty()) throw std::invalid_argument("lstm_forward: empty sequence");
  LstmForward f;
  Vector h(cell.hidden_size());
  Vector c(cell.hidden_size());
  for (const Vector& x : inputs) {
    f.steps.push_back(lstm_step(cell, x, h, c));
    h = f.steps.back().h;
    c = f.steps.back().c;
    f.outputs.push_back(head.apply(h));
  }
  return f;
}

namespace {

void accumulate_head(Readout& grads, const Vector& d_logit, const Vector& h) {
  add_inplace(grads.w, outer(d_logit, h));
  add_inplace(grads.b, d_logit);
}

}  // namespace

LstmGradients lstm_bptt(const LstmCell& cell, const Readout& head, const LstmForward& fwd, const Sequence& targets,
                        StepLoss loss) {
  const std::size_t steps = fwd.steps.size();
  if (targets.size() != steps) throw ShapeError(fmt::format("lstm_bptt: {} targets for {} steps", targets.size(), steps));
  LstmGradients g{LstmCell::zeros(cell.input_size(), cell.hidden_size()),
                  Readout::zeros(cell.hidden_size(), head.w.rows(), head.output)};
  Vector dh_next(cell.hidden_size());
  Vector dc_next(cell.hidden_size());
  for (std::size_t t = steps; t-- > 0;) {
    const Vector d_logit = logit_gradient(fwd.outputs[t], targets[t], head.output, loss);
    accumulate_head(g.head, d_logit, fwd.steps[t].h);
    const Vector dh = add(matvec_transposed(head.w, d_logit), dh_next);
    const StepInputGradients back = lstm_step_backward(cell, fwd.steps[t].cache, dh, dc_next, g.cell);
    dh_next = back.h_prev;
    dc_next = back.c_prev;
  }
  return g;
}

GruForward gru_forward(const GruCell& cell, const Readout& head, const Sequence& inputs) {
  if (inputs.empty()) throw std::invalid_argument("gru_forward: empty sequence");
  GruForward f;
  Vector h(cell.hidden_size());
  for (const Vector& x : inputs) {
    f.steps.push_back(gru_step(cell, x, h));
    h = f.steps.back().h;
    f.outputs.push_back(head.apply(h));
  }
  return f;
}

GruGradients gru_bptt(const GruCell& cell, const Readout& head, const GruForward& fwd, const Sequence& targets,
                      StepLoss loss) {
  const std::size_t steps = fwd.steps.size();
  if (targets.size() != steps) throw ShapeError(fmt::format("gru_bptt: {} targets for {} steps", targets.size(), steps));
  GruGradients g{GruCell::zeros(cell.input_size(), cell.hidden_size()),
                 Readout::zeros(cell.hidden_size(), head.w.rows(), head.output)};
  Vector dh_next(cell.hidden_size());
  for (std::size_t t = steps; t-- > 0;) {
    const Vector d_logit = logit_gradient(fwd.outputs[t], targets[t], head.output, loss);
    accumulate_head(g.head, d_logit, fwd.steps[t].h);
    const Vector dh = add(matvec_transposed(head.w, d_logit), dh_next);
    dh_next = gru_step_backward(cell, fwd.steps[t].cache, dh, g.cell).h_prev;
  }
  return g;
}

CellKind parse_cell_kind(const std::string& name) {
  if (name == "simple") return CellKind::Simple;
  if (name == "lstm") return CellKind::Lstm;
  if (name == "gru") return CellKind::Gru;
  throw std::invalid_argument(fmt::format("unknown cell kind '{}'", name));
}

RecurrentModel::RecurrentModel(CellKind kind, std::size_t inputs, std::size_t hidden, std::size_t outputs,
                               OutputKind output, std::uint64_t seed)
    : kind_(kind) {
  Rng rng(seed);
  switch (kind) {
    case CellKind::Simple: simple_ = RnnCell::random(inputs, hidden, outputs, output, rng); break;
    case CellKind::Lstm:
      lstm_ = LstmCell::random(inputs, hidden, rng);
      head_ = Readout::random(hidden, outputs, output, rng);
      break;
    case CellKind::Gru:
      gru_ = GruCell::random(inputs, hidden, rng);
      head_ = Readout::random(hidden, outputs, output, rng);
      break;
  }
}

std::vector<NamedBlock> RecurrentModel::blocks() {
  if (kind_ == CellKind::Simple) return simple_.blocks();
  std::vector<NamedBlock> out = kind_ == CellKind::Lstm ? lstm_.blocks() : gru_.blocks();
  for (NamedBlock& b : head_.blocks()) out.push_back(b);
  return out;
}

std::size_t RecurrentModel::parameter_count() {
  std::size_t n = 0;
  for (const NamedBlock& b : blocks()) n += b.values.size();
  return n;
}

std::vector<double> RecurrentModel::flat_parameters() {
  std::vector<double> flat;
  for (const NamedBlock& b : blocks()) flat.insert(flat.end(), b.values.begin(), b.values.end());
  return flat;
}

void RecurrentModel::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("RecurrentModel::assign_flat: wrong parameter count");
  std::size_t pos = 0;
  for (const NamedBlock& b : blocks())
    for (double& v : b.values) v = flat[pos++];
}

namespace {

void append_blocks(std::vector<double>& flat, std::vector<NamedBlock> blocks) {
  for (const NamedBlock& b : blocks) flat.insert(flat.end(), b.values.begin(), b.values.end());
}

}  // namespace

double RecurrentModel::loss_and_gradient(const SequenceExample& example, StepLoss loss, std::vector<double>& grad) {
  grad.clear();
  switch (kind_) {
    case CellKind::Simple: {
      const RnnForward f = rnn_forward(simple_, example.inputs);
      RnnGradients g = rnn_bptt(simple_, example.inputs, f, example.targets, loss);
      append_blocks(grad, g.params.blocks());
      return sequence_loss(f.outputs, example.targets, loss);
    }
    case CellKind::Lstm: {
      const LstmForward f = lstm_forward(lstm_, head_, example.inputs);
      LstmGradients g = lstm_bptt(lstm_, head_, f, example.targets, loss);
      append_blocks(grad, g.cell.blocks());
      append_blocks(grad, g.head.blocks());
      return sequence_loss(f.outputs, example.targets, loss);
    }
    case CellKind::Gru: {
      const GruForward f = gru_forward(gru_, head_, example.inputs);
      GruGradients g = gru_bptt(gru_, head_, f, example.targets, loss);
      append_blocks(grad, g.cell.blocks());
      append_blocks(grad, g.head.blocks());
      return sequence_loss(f.outputs, example.targets, loss);
    }
  }
  return 0.0;
}

Sequence RecurrentModel::predict(const Sequence& inputs) const {
  switch (kind_) {
    case CellKind::Simple: return rnn_forward(simple_, inputs).outputs;
    case CellKind::Lstm: return lstm_forward(lstm_, head_, inputs).outputs;
    case CellKind::Gru: return gru_forward(gru_, head_, inputs).outputs;
  }
  return {};
}

double RecurrentModel::loss(const SequenceExample& example, StepLoss loss) const {
  return sequence_loss(predict(example.inputs), example.targets, loss);
}

std::vector<double> train_sequence_model(RecurrentModel& model, const std::vector<SequenceExample>& data,
                                         const SequenceTrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("train_sequence_model: no sequences");
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  Optimizer optimizer(options.optimizer, model.parameter_count());
  std::vector<double> history;
  std::vector<double> grad;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t start = 0; start < data.size(); start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, data.size() - start);
      std::vector<double> batch_grad(model.parameter_count(), 0.0);
      for (std::size_t i = start; i < start + count; ++i) {
        total += model.loss_and_gradient(data[i], options.loss, grad);
        for (std::size_t k = 0; k < grad.size(); ++k) batch_grad[k] += grad[k] / static_cast<double>(count);
      }
      std::vector<double> params = model.flat_parameters();
      optimizer.step(params, batch_grad);
      model.assign_flat(params);
    }
    history.push_back(total / static_cast<double>(data.size()));
  }
  return history;
}

}  // namespace dlk
