#include "dlk/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace dlk {

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("mlp needs at least an input and an output layer");
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    if (layer_sizes[i] == 0) throw std::invalid_argument(fmt::format("layer {} has zero width", i));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0,1)");
  if (!(l2_lambda >= 0.0)) throw std::invalid_argument("l2_lambda must be >= 0");
}

std::size_t MlpState::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

std::vector<double> MlpState::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    flat.insert(flat.end(), weights[i].raw().begin(), weights[i].raw().end());
    flat.insert(flat.end(), biases[i].raw().begin(), biases[i].raw().end());
  }
  return flat;
}

void MlpState::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError(fmt::format("assign_flat: expected {} values, got {}", parameter_count(), flat.size()));
  }
  std::size_t pos = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (double& v : weights[i].values()) v = flat[pos++];
    for (double& v : biases[i]) v = flat[pos++];
  }
}

double relu(double x) { return x > 0.0 ? x : 0.0; }
double relu_prime(double x) { return x >= 0.0 ? 1.0 : 0.0; }

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = relu(v);
  return out;
}

Matrix relu_prime(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = relu_prime(v);
  return out;
}

namespace {

void softmax_inplace(std::span<double> row) {
  const double peak = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : row) v /= total;
}

}  // namespace

Matrix softmax_rows(const Matrix& z) {
  Matrix out = z;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

Vector softmax(const Vector& z) {
  Vector out = z;
  if (!out.empty()) softmax_inplace(out.values());
  return out;
}

Matrix softmax_jacobian(const Vector& s) {
  Matrix j(s.size(), s.size());
  for (std::size_t a = 0; a < s.size(); ++a)
    for (std::size_t b = 0; b < s.size(); ++b) j(a, b) = (a == b ? s[a] : 0.0) - s[a] * s[b];
  return j;
}

double cross_entropy(const Matrix& y_hat, const Matrix& y) {
  if (!y_hat.same_shape(y)) {
    throw ShapeError(fmt::format("cross_entropy: predictions {} vs targets {}", y_hat.shape_string(), y.shape_string()));
  }
  double total = 0.0;
  auto p = y_hat.values();
  auto t = y.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != 0.0) total -= t[i] * std::log(std::clamp(p[i], kProbabilityClip, 1.0 - kProbabilityClip));
  }
  return total / static_cast<double>(y.rows());
}

Matrix one_hot(const std::vector<int>& labels, std::size_t classes) {
  Matrix y(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::invalid_argument(fmt::format("label {} at row {} outside [0, {})", labels[i], i, classes));
    }
    y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return y;
}

MlpState init_weights(const MlpSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  MlpState state;
  for (std::size_t i = 1; i < spec.layer_sizes.size(); ++i) {
    const std::size_t fan_in = spec.layer_sizes[i - 1];
    state.weights.push_back(rng.normal_matrix(fan_in, spec.layer_sizes[i], 1.0 / std::sqrt(static_cast<double>(fan_in))));
    state.biases.emplace_back(spec.layer_sizes[i]);
  }
  return state;
}

MlpState zero_state(const MlpSpec& spec) {
  spec.validate();
  MlpState state;
  for (std::size_t i = 1; i < spec.layer_sizes.size(); ++i) {
    state.weights.emplace_back(spec.layer_sizes[i - 1], spec.layer_sizes[i]);
    state.biases.emplace_back(spec.layer_sizes[i]);
  }
  return state;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0,1)");
  Matrix mask(rows, cols, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.bernoulli(1.0 - rate) ? keep_scale : 0.0;
  return mask;
}

ForwardCache forward(const Matrix& x, const MlpState& state, const DropoutConfig& dropout) {
  const std::size_t d = state.depth();
  if (d == 0) throw std::invalid_argument("forward: empty network");
  if (x.cols() != state.weights[0].rows()) {
    throw ShapeError(fmt::format("forward: input {} but first layer expects {} features", x.shape_string(),
                                 state.weights[0].rows()));
  }
  const bool use_dropout = dropout.rate > 0.0 && dropout.rng != nullptr;
  ForwardCache cache;
  cache.h.push_back(x);
  for (std::size_t i = 0; i < d; ++i) {
    cache.z.push_back(add_row_broadcast(matmul(cache.h.back(), state.weights[i]), state.biases[i]));
    if (i + 1 < d) {
      Matrix h = relu(cache.z.back());
      if (use_dropout) {
        cache.masks.push_back(dropout_mask(h.rows(), h.cols(), dropout.rate, *dropout.rng));
        h = hadamard(h, cache.masks.back());
      }
      cache.h.push_back(std::move(h));
    } else {
      cache.h.push_back(softmax_rows(cache.z.back()));
    }
  }
  return cache;
}

double total_loss(const ForwardCache& cache, const MlpState& state, const Matrix& y, double l2_lambda) {
  double loss = cross_entropy(cache.output(), y);
  if (l2_lambda > 0.0) {
    for (const Matrix& w : state.weights) loss += l2_lambda * trace_inner(w, w);
  }
  return loss;
}

MlpGradients backward(const ForwardCache& cache, const MlpState& state, const Matrix& y, double l2_lambda) {
  const std::size_t d = state.depth();
  if (cache.z.size() != d || cache.h.size() != d + 1) {
    throw std::invalid_argument(fmt::format("backward: cache holds {} layers, network has {}", cache.z.size(), d));
  }
  if (!y.same_shape(cache.output())) {
    throw ShapeError(fmt::format("backward: targets {} vs predictions {}", y.shape_string(), cache.output().shape_string()));
  }
  MlpGradients grads;
  grads.weights.resize(d);
  grads.biases.resize(d);

  Matrix grad_z = scale(subtract(cache.output(), y), 1.0 / static_cast<double>(y.rows()));
  for (std::size_t layer = d; layer-- > 0;) {
    grads.weights[layer] = matmul(transpose(cache.h[layer]), grad_z);
    grads.biases[layer] = column_sum(grad_z);
    if (l2_lambda > 0.0) add_inplace(grads.weights[layer], scale(state.weights[layer], 2.0 * l2_lambda));
    if (layer == 0) break;
    Matrix grad_h = matmul(grad_z, transpose(state.weights[layer]));
    if (!cache.masks.empty()) grad_h = hadamard(grad_h, cache.masks[layer - 1]);
    grad_z = hadamard(grad_h, relu_prime(cache.z[layer - 1]));
  }
  return grads;
}

std::vector<int> predict_classes(const Matrix& probabilities) {
  std::vector<int> out(probabilities.rows());
  for (std::size_t i = 0; i < probabilities.rows(); ++i) {
    auto r = probabilities.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw ShapeError(fmt::format("accuracy: {} predictions, {} labels", predicted.size(), labels.size()));
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(x.row(idx[i]).begin(), x.cols(), out.row(i).begin());
  return out;
}

}  // namespace

MlpTrainResult train_mlp(const MlpSpec& spec, const Matrix& x, const std::vector<int>& labels,
                         const MlpTrainOptions& options) {
  return train_mlp(spec, init_weights(spec), x, labels, options);
}

MlpTrainResult train_mlp(const MlpSpec& spec, MlpState initial, const Matrix& x, const std::vector<int>& labels,
                         const MlpTrainOptions& options) {
  spec.validate();
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (x.rows() != labels.size()) {
    throw ShapeError(fmt::format("train_mlp: {} rows but {} labels", x.rows(), labels.size()));
  }
  const Matrix targets = one_hot(labels, spec.layer_sizes.back());
  const std::size_t n = x.rows();

  MlpTrainResult result;
  result.state = std::move(initial);
  Optimizer optimizer(options.optimizer, result.state.parameter_count());
  const Rng root(spec.seed);
  Rng dropout_rng = root.split(1);
  Rng order_rng = root.split(2);
  const DropoutConfig dropout{spec.dropout_rate, &dropout_rng};

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.shuffle) order = order_rng.permutation(n);
    double weighted_loss = 0.0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t count = std::min(options.batch_size, n - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      const Matrix xb = gather_rows(x, idx);
      const Matrix yb = gather_rows(targets, idx);
      const ForwardCache cache = forward(xb, result.state, dropout);
      weighted_loss += total_loss(cache, result.state, yb, spec.l2_lambda) * static_cast<double>(count);
      const MlpGradients grads = backward(cache, result.state, yb, spec.l2_lambda);
      std::vector<double> params = result.state.flatten();
      const std::vector<double> flat_grad = grads.flatten();
      optimizer.step(params, flat_grad);
      result.state.assign_flat(params);
    }
    const ForwardCache eval = forward(x, result.state);
    result.history.push_back({weighted_loss / static_cast<double>(n), accuracy(predict_classes(eval.output()), labels)});
  }
  return result;
}

std::string mlp_state_to_json(const MlpState& state) {
  nlohmann::json doc;
  std::vector<std::size_t> sizes;
  if (!state.weights.empty()) sizes.push_back(state.weights.front().rows());
  for (const Matrix& w : state.weights) sizes.push_back(w.cols());
  doc["layer_sizes"] = sizes;
  doc["weights"] = nlohmann::json::array();
  for (const Matrix& w : state.weights) {
    doc["weights"].push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"data", w.raw()}});
  }
  doc["biases"] = nlohmann::json::array();
  for (const Vector& b : state.biases) doc["biases"].push_back(b.raw());
  return doc.dump(2);
}

MlpState mlp_state_from_json(const std::string& text) {
  try {
    const nlohmann::json doc = nlohmann::json::parse(text);
    MlpState state;
    const auto& weights = doc.at("weights");
    const auto& biases = doc.at("biases");
    if (weights.size() != biases.size() || weights.empty()) {
      throw std::invalid_argument("weights and biases must be non-empty lists of equal length");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const auto& w = weights[i];
      state.weights.emplace_back(w.at("rows").get<std::size_t>(), w.at("cols").get<std::size_t>(),
                                 w.at("data").get<std::vector<double>>());
      state.biases.emplace_back(biases[i].get<std::vector<double>>());
      if (state.biases.back().size() != state.weights.back().cols()) {
        throw std::invalid_argument(fmt::format("bias {} length does not match weight columns", i));
      }
      if (i > 0 && state.weights[i].rows() != state.weights[i - 1].cols()) {
        throw std::invalid_argument(fmt::format("weight {} rows do not match previous layer width", i));
      }
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed model JSON: {}", e.what()));
  } catch (const ShapeError& e) {
    throw std::invalid_argument(fmt::format("malformed model JSON: {}", e.what()));
  }
}

}  // namespace dlk
