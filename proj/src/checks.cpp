#include "dlk/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "dlk/attention.hpp"
#include "dlk/conv.hpp"
#include "dlk/linear.hpp"
#include "dlk/mlp.hpp"
#include "dlk/random.hpp"
#include "dlk/recurrent.hpp"

namespace dlk {

namespace {

constexpr double kLooseTol = 1e-4;
constexpr std::size_t kMaxRedraws = 1000;

using InstanceFn = std::function<GradCheckReport(Rng&, double tol)>;

GradCheckOptions options_with(double tol) {
  GradCheckOptions o;
  o.tol_rel = tol;
  o.resolution_guard = true;
  return o;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

double min_abs(std::span<const double> values) {
  double best = std::numeric_limits<double>::infinity();
  for (double v : values) best = std::min(best, std::abs(v));
  return best;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.index(classes));
  return y;
}

GradCheckReport check_logistic(Rng& rng, double tol) {
  const std::size_t n = pick(rng, 3, 8);
  const std::size_t d = pick(rng, 1, 4);
  Matrix x = rng.normal_matrix(n, d);
  std::vector<int> y = random_labels(rng, n, 2);
  Vector w = rng.normal_vector(d);
  Vector b{rng.normal()};
  const LogisticGradient g = logistic_gradient(x, logistic_forward(x, w, b[0]), y);
  const Vector gb{g.b};
  auto loss = [&] { return logistic_loss(logistic_forward(x, w, b[0]), y); };
  return check_gradient(loss, {{"w", w.values(), g.w.values()}, {"b", b.values(), gb.values()}}, options_with(tol));
}

GradCheckReport check_mlp(Rng& rng, double tol) {
  MlpSpec spec;
  spec.layer_sizes = {pick(rng, 2, 4), pick(rng, 3, 6), pick(rng, 3, 6), pick(rng, 2, 4)};
  spec.seed = rng.index(1u << 30);
  const double lambda = rng.uniform(0.0, 0.1);
  MlpState state = init_weights(spec);
  for (Vector& b : state.biases) b = rng.normal_vector(b.size(), 0.5);
  const std::size_t n = pick(rng, 3, 8);
  const Matrix x = rng.normal_matrix(n, spec.layer_sizes.front());
  const Matrix y = one_hot(random_labels(rng, n, spec.layer_sizes.back()), spec.layer_sizes.back());
  const ForwardCache cache = forward(x, state, {});
  const MlpGradients g = backward(cache, state, y, lambda);
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i < state.depth(); ++i) {
    blocks.push_back({fmt::format("W{}", i + 1), state.weights[i].values(), g.weights[i].values()});
    blocks.push_back({fmt::format("b{}", i + 1), state.biases[i].values(), g.biases[i].values()});
  }
  GradCheckOptions opts = options_with(tol);
  opts.kink_distance = [&] {
    const ForwardCache c = forward(x, state, {});
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < c.z.size(); ++i) gap = std::min(gap, min_abs(c.z[i].values()));
    return gap;
  };
  return check_gradient([&] { return total_loss(forward(x, state, {}), state, y, lambda); }, blocks, opts);
}

GradCheckReport check_softmax_ce(Rng& rng, double tol) {
  const std::size_t n = pick(rng, 1, 6);
  const std::size_t k = pick(rng, 2, 5);
  Matrix z = rng.normal_matrix(n, k, 2.0);
  const Matrix y = one_hot(random_labels(rng, n, k), k);
  const Matrix g = scale(subtract(softmax_rows(z), y), 1.0 / static_cast<double>(n));
  return check_gradient([&] { return cross_entropy(softmax_rows(z), y); }, {{"Z", z.values(), g.values()}},
                        options_with(tol));
}

GradCheckReport check_conv(Rng& rng, double tol) {
  ConvSpec spec;
  spec.c_in = pick(rng, 1, 3);
  spec.c_out = pick(rng, 1, 3);
  spec.kernel = pick(rng, 1, 3);
  spec.stride = pick(rng, 1, 2);
  spec.pad = pick(rng, 0, 1);
  const std::size_t side = pick(rng, spec.kernel + 1, 7);
  Tensor4 input = rng.normal_tensor({2, spec.c_in, side, side});
  Tensor4 kernel = rng.normal_tensor({spec.c_out, spec.c_in, spec.kernel, spec.kernel});
  Vector bias = rng.normal_vector(spec.c_out);
  const Tensor4 g = rng.normal_tensor(conv_forward(input, kernel, spec, bias).dims());
  const ConvGradients grads = conv_backward(g, input, kernel, spec);
  auto loss = [&] { return trace_inner(conv_forward(input, kernel, spec, bias), g); };
  return check_gradient(loss,
                        {{"input", input.values(), grads.input.values()},
                         {"kernel", kernel.values(), grads.kernel.values()},
                         {"bias", bias.values(), grads.bias.values()}},
                        options_with(tol));
}

GradCheckReport check_maxpool(Rng& rng, double tol) {
  const std::size_t p = pick(rng, 2, 3);
  const std::size_t s = pick(rng, 1, 2);
  const std::size_t side = pick(rng, p + 1, 7);
  Tensor4 input = rng.normal_tensor({2, pick(rng, 1, 2), side, side});
  const MaxPoolResult fwd = maxpool_forward(input, p, s);
  const Tensor4 g = rng.normal_tensor(fwd.output.dims());
  const Tensor4 grad = maxpool_backward(g, fwd.argmax, input.dims());
  GradCheckOptions opts = options_with(tol);
  opts.kink_distance = [&] { return maxpool_min_gap(input, p, s); };
  return check_gradient([&] { return trace_inner(maxpool_forward(input, p, s).output, g); },
                        {{"input", input.values(), grad.values()}}, opts);
}

GradCheckReport check_avgpool(Rng& rng, double tol) {
  const std::size_t p = pick(rng, 2, 3);
  const std::size_t s = pick(rng, 1, 3);
  const std::size_t side = pick(rng, p + 1, 7);
  Tensor4 input = rng.normal_tensor({2, pick(rng, 1, 2), side, side});
  const Tensor4 g = rng.normal_tensor(avgpool_forward(input, p, s).dims());
  const Tensor4 grad = avgpool_backward(g, input.dims(), p, s);
  return check_gradient([&] { return trace_inner(avgpool_forward(input, p, s), g); },
                        {{"input", input.values(), grad.values()}}, options_with(tol));
}

GradCheckReport check_batchnorm(Rng& rng, double tol) {
  const std::size_t c = pick(rng, 1, 3);
  Tensor4 input = rng.normal_tensor({pick(rng, 2, 4), c, pick(rng, 1, 3), pick(rng, 1, 3)});
  BatchNormState state = BatchNormState::for_channels(c);
  state.gamma = rng.normal_vector(c);
  state.beta = rng.normal_vector(c);
  auto run = [&] {
    BatchNormState copy = state;
    return batchnorm_forward(input, copy);
  };
  const BatchNormResult fwd = run();
  const Tensor4 g = rng.normal_tensor(fwd.output.dims());
  const BatchNormGradients grads = batchnorm_backward(g, fwd.cache, state);
  return check_gradient([&] { return trace_inner(run().output, g); },
                        {{"input", input.values(), grads.input.values()},
                         {"gamma", state.gamma.values(), grads.gamma.values()},
                         {"beta", state.beta.values(), grads.beta.values()}},
                        options_with(tol));
}

struct SequenceProblem {
  Sequence inputs;
  Sequence targets;
  OutputKind output;
  StepLoss loss;
};

SequenceProblem random_sequence_problem(Rng& rng, std::size_t d, std::size_t o) {
  SequenceProblem p;
  // With T = 2 each U entry is a single product of small factors; longer runs keep it off zero.
  const std::size_t steps = pick(rng, 3, 5);
  const bool classify = rng.bernoulli(0.5);
  p.output = classify ? OutputKind::Softmax : OutputKind::Identity;
  p.loss = classify ? StepLoss::CrossEntropy : StepLoss::MeanSquared;
  for (std::size_t t = 0; t < steps; ++t) {
    p.inputs.push_back(rng.normal_vector(d));
    if (classify) {
      Vector y(o);
      y[rng.index(o)] = 1.0;
      p.targets.push_back(y);
    } else {
      p.targets.push_back(rng.normal_vector(o));
    }
  }
  return p;
}

std::vector<ParamBlock> pair_blocks(std::vector<NamedBlock> params, std::vector<NamedBlock> grads) {
  std::vector<ParamBlock> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({params[i].name, params[i].values, grads[i].values});
  return out;
}

GradCheckReport check_rnn(Rng& rng, double tol) {
  const std::size_t d = pick(rng, 1, 3), h = pick(rng, 2, 4), o = pick(rng, 2, 3);
  const SequenceProblem p = random_sequence_problem(rng, d, o);
  RnnCell cell = RnnCell::random(d, h, o, p.output, rng);
  cell.b_h = rng.normal_vector(h, 0.5);
  cell.b_y = rng.normal_vector(o, 0.5);
  Vector h_init = rng.normal_vector(h, 0.5);
  const RnnForward fwd = rnn_forward(cell, p.inputs, h_init);
  RnnGradients g = rnn_bptt(cell, p.inputs, fwd, p.targets, p.loss);
  std::vector<ParamBlock> blocks = pair_blocks(cell.blocks(), g.params.blocks());
  blocks.push_back({"h_init", h_init.values(), g.h_init.values()});
  auto loss = [&] { return sequence_loss(rnn_forward(cell, p.inputs, h_init).outputs, p.targets, p.loss); };
  return check_gradient(loss, blocks, options_with(tol));
}

GradCheckReport check_lstm(Rng& rng, double tol) {
  const std::size_t d = pick(rng, 1, 3), h = pick(rng, 2, 3), o = pick(rng, 2, 3);
  const SequenceProblem p = random_sequence_problem(rng, d, o);
  LstmCell cell = LstmCell::random(d, h, rng);
  for (NamedBlock& b : cell.blocks())
    if (b.name.ends_with(".b"))
      for (double& v : b.values) v = rng.normal(0.0, 0.5);
  Readout head = Readout::random(h, o, p.output, rng);
  LstmGradients g = lstm_bptt(cell, head, lstm_forward(cell, head, p.inputs), p.targets, p.loss);
  std::vector<ParamBlock> blocks = pair_blocks(cell.blocks(), g.cell.blocks());
  for (const ParamBlock& b : pair_blocks(head.blocks(), g.head.blocks())) blocks.push_back(b);
  auto loss = [&] { return sequence_loss(lstm_forward(cell, head, p.inputs).outputs, p.targets, p.loss); };
  return check_gradient(loss, blocks, options_with(tol));
}

GradCheckReport check_gru(Rng& rng, double tol) {
  const std::size_t d = pick(rng, 1, 3), h = pick(rng, 2, 3), o = pick(rng, 2, 3);
  const SequenceProblem p = random_sequence_problem(rng, d, o);
  GruCell cell = GruCell::random(d, h, rng);
  for (NamedBlock& b : cell.blocks())
    if (b.name.ends_with(".b"))
      for (double& v : b.values) v = rng.normal(0.0, 0.5);
  Readout head = Readout::random(h, o, p.output, rng);
  GruGradients g = gru_bptt(cell, head, gru_forward(cell, head, p.inputs), p.targets, p.loss);
  std::vector<ParamBlock> blocks = pair_blocks(cell.blocks(), g.cell.blocks());
  for (const ParamBlock& b : pair_blocks(head.blocks(), g.head.blocks())) blocks.push_back(b);
  auto loss = [&] { return sequence_loss(gru_forward(cell, head, p.inputs).outputs, p.targets, p.loss); };
  return check_gradient(loss, blocks, options_with(tol));
}

GradCheckReport check_attention(Rng& rng, double tol) {
  const std::size_t n = pick(rng, 1, 4), d = pick(rng, 2, 4);
  Matrix x = rng.normal_matrix(n, d);
  AttentionHead head = AttentionHead::random(d, pick(rng, 1, 3), pick(rng, 1, 3), rng);
  const AttentionCache c = attention_forward(x, head);
  const Matrix g = rng.normal_matrix(c.z.rows(), c.z.cols());
  const AttentionGradients grads = attention_backward(x, head, c, g);
  return check_gradient([&] { return trace_inner(attention_output(x, head), g); },
                        {{"X", x.values(), grads.x.values()},
                         {"W_Q", head.w_q.values(), grads.head.w_q.values()},
                         {"W_K", head.w_k.values(), grads.head.w_k.values()},
                         {"W_V", head.w_v.values(), grads.head.w_v.values()}},
                        options_with(tol));
}

GradCheckReport check_ffn(Rng& rng, double tol) {
  const std::size_t n = pick(rng, 1, 4), d_in = pick(rng, 1, 4), d_ff = pick(rng, 2, 5), d_out = pick(rng, 1, 4);
  Matrix z = rng.normal_matrix(n, d_in);
  FeedForward ffn = FeedForward::random(d_in, d_ff, d_out, rng);
  ffn.b1 = rng.normal_vector(d_ff, 0.5);
  ffn.b2 = rng.normal_vector(d_out, 0.5);
  FeedForwardCache cache;
  const Matrix out = ffn_forward(z, ffn, &cache);
  const Matrix g = rng.normal_matrix(out.rows(), out.cols());
  const FeedForwardGradients grads = ffn_backward(ffn, cache, g);
  GradCheckOptions opts = options_with(tol);
  opts.kink_distance = [&] {
    FeedForwardCache c;
    ffn_forward(z, ffn, &c);
    return ffn_kink_distance(c);
  };
  return check_gradient([&] { return trace_inner(ffn_forward(z, ffn), g); },
                        {{"input", z.values(), grads.input.values()},
                         {"W1", ffn.w1.values(), grads.params.w1.values()},
                         {"b1", ffn.b1.values(), grads.params.b1.values()},
                         {"W2", ffn.w2.values(), grads.params.w2.values()},
                         {"b2", ffn.b2.values(), grads.params.b2.values()}},
                        opts);
}

GradCheckReport check_layernorm(Rng& rng, double tol) {
  const std::size_t n = pick(rng, 1, 4), d = pick(rng, 3, 6);
  Matrix x = rng.normal_matrix(n, d);
  Vector gain = rng.normal_vector(d);
  Vector offset = rng.normal_vector(d);
  LayerNormCache cache;
  const Matrix out = layernorm_rows(x, gain, offset, kLayerNormEpsilon, &cache);
  const Matrix g = rng.normal_matrix(out.rows(), out.cols());
  const LayerNormGradients grads = layernorm_backward(cache, gain, g);
  return check_gradient([&] { return trace_inner(layernorm_rows(x, gain, offset, kLayerNormEpsilon), g); },
                        {{"input", x.values(), grads.input.values()},
                         {"gain", gain.values(), grads.gain.values()},
                         {"offset", offset.values(), grads.offset.values()}},
                        options_with(tol));
}

GradCheckReport check_transformer(Rng& rng, double tol) {
  const bool variant = rng.bernoulli(0.5);
  // Two features normalize to ±1 whatever the input, leaving only ε-sized gradients.
  const std::size_t n = pick(rng, 1, 4), d = pick(rng, 3, 5);
  const std::size_t d_v = variant ? d : pick(rng, 1, 3);
  TransformerBlock block = TransformerBlock::random(d, pick(rng, 1, 3), d_v, pick(rng, 2, 5), rng,
                                                    variant ? BlockVariant::TwoAddNorm : BlockVariant::Formula);
  block.ffn.b1 = rng.normal_vector(block.ffn.b1.size(), 0.5);
  block.ffn.b2 = rng.normal_vector(block.ffn.b2.size(), 0.5);
  block.gain = rng.normal_vector(d);
  block.offset = rng.normal_vector(d);
  block.attn_gain = rng.normal_vector(d);
  block.attn_offset = rng.normal_vector(d);
  Matrix x = rng.normal_matrix(n, d);
  const TransformerCache cache = transformer_forward_cached(x, block);
  const Matrix g = rng.normal_matrix(n, d);
  TransformerGradients grads = transformer_block_backward(x, block, cache, g);
  std::vector<ParamBlock> blocks = pair_blocks(block.blocks(), grads.params.blocks());
  blocks.push_back({"X", x.values(), grads.x.values()});
  GradCheckOptions opts = options_with(tol);
  opts.kink_distance = [&] { return ffn_kink_distance(transformer_forward_cached(x, block).ffn); };
  return check_gradient([&] { return trace_inner(transformer_block_forward(x, block), g); }, blocks, opts);
}

struct Suite {
  InstanceFn fn;
  double tol;
};

const std::map<std::string, Suite>& registry() {
  static const std::map<std::string, Suite> suites{
      {"logistic", {check_logistic, kDefaultRelTol}},   {"mlp", {check_mlp, kDefaultRelTol}},
      {"softmax-ce", {check_softmax_ce, kDefaultRelTol}}, {"conv", {check_conv, kDefaultRelTol}},
      {"maxpool", {check_maxpool, kDefaultRelTol}},     {"avgpool", {check_avgpool, kDefaultRelTol}},
      {"batchnorm", {check_batchnorm, kLooseTol}},      {"rnn", {check_rnn, kDefaultRelTol}},
      {"lstm", {check_lstm, kDefaultRelTol}},           {"gru", {check_gru, kDefaultRelTol}},
      {"attention", {check_attention, kDefaultRelTol}}, {"ffn", {check_ffn, kDefaultRelTol}},
      {"layernorm", {check_layernorm, kDefaultRelTol}}, {"transformer", {check_transformer, kLooseTol}},
  };
  return suites;
}

}  // namespace

const std::vector<std::string>& check_suite_names() {
  static const std::vector<std::string> names{"logistic", "mlp",  "softmax-ce", "conv",      "maxpool",
                                              "avgpool",  "batchnorm", "rnn",  "lstm",      "gru",
                                              "attention", "ffn", "layernorm",  "transformer"};
  return names;
}

std::vector<std::string> resolve_suites(const std::string& name) {
  if (name == "all") return check_suite_names();
  if (name == "linear") return {"logistic"};
  if (name == "recurrent") return {"rnn", "lstm", "gru"};
  if (name == "cnn") return {"conv", "maxpool", "avgpool", "batchnorm"};
  if (registry().count(name)) return {name};
  throw std::invalid_argument(fmt::format("unknown gradient-check suite '{}'", name));
}

double suite_tolerance(const std::string& name) {
  auto it = registry().find(name);
  if (it == registry().end()) throw std::invalid_argument(fmt::format("unknown gradient-check suite '{}'", name));
  return it->second.tol;
}

SuiteResult run_check_suite(const std::string& name, std::size_t instances, std::uint64_t seed) {
  auto it = registry().find(name);
  if (it == registry().end()) throw std::invalid_argument(fmt::format("unknown gradient-check suite '{}'", name));
  const auto start = std::chrono::steady_clock::now();
  SuiteResult result;
  result.name = name;
  std::vector<GradCheckReport> reports;
  const auto& names = check_suite_names();
  const auto position = static_cast<std::uint64_t>(std::find(names.begin(), names.end(), name) - names.begin());
  const Rng root(mix_seed(seed, position));
  std::uint64_t stream = 0;
  while (reports.size() < instances) {
    if (result.redraws > kMaxRedraws) {
      throw std::runtime_error(fmt::format("suite '{}': too many instances rejected by the kink or resolution guard", name));
    }
    Rng rng = root.split(stream++);
    try {
      reports.push_back(it->second.fn(rng, it->second.tol));
    } catch (const KinkError&) {
      ++result.redraws;
    } catch (const ResolutionError&) {
      ++result.redraws;
    }
  }
  result.instances = reports.size();
  result.report = merge(reports);
  result.report.tolerance = it->second.tol;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace dlk
