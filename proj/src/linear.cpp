#include "dlk/linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "dlk/random.hpp"

namespace dlk {

LabeledSet::LabeledSet(Matrix features, std::vector<int> labels, LabelConvention conv)
    : x(std::move(features)), y(std::move(labels)), convention(conv) {
  if (y.empty()) throw std::invalid_argument("labeled set must contain at least one point");
  if (x.rows() != y.size()) {
    throw std::invalid_argument(fmt::format("{} feature rows but {} labels", x.rows(), y.size()));
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool ok = conv == LabelConvention::PlusMinusOne ? (y[i] == 1 || y[i] == -1) : (y[i] == 0 || y[i] == 1);
    if (!ok) {
      throw std::invalid_argument(fmt::format("label {} at row {} is outside the {} convention", y[i], i,
                                              conv == LabelConvention::PlusMinusOne ? "+-1" : "0/1"));
    }
  }
}

LabeledSet with_convention(const LabeledSet& data, LabelConvention target) {
  if (data.convention == target) return data;
  std::vector<int> labels(data.y.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = target == LabelConvention::PlusMinusOne ? (data.y[i] == 1 ? 1 : -1) : (data.y[i] == 1 ? 1 : 0);
  }
  return LabeledSet(data.x, std::move(labels), target);
}

LabeledSet lift_affine(const LabeledSet& data) {
  Matrix lifted(data.x.rows(), data.x.cols() + 1);
  for (std::size_t i = 0; i < data.x.rows(); ++i) {
    for (std::size_t j = 0; j < data.x.cols(); ++j) lifted(i, j) = data.x(i, j);
    lifted(i, data.x.cols()) = 1.0;
  }
  return LabeledSet(std::move(lifted), data.y, data.convention);
}

namespace {

double affine_score(std::span<const double> w, double b, std::span<const double> x) {
  double s = b;
  for (std::size_t j = 0; j < x.size(); ++j) s += w[j] * x[j];
  return s;
}

}  // namespace

PerceptronModel perceptron_train(const LabeledSet& data, const PerceptronOptions& options,
                                 const PerceptronModel& initial) {
  if (data.convention != LabelConvention::PlusMinusOne) {
    throw std::invalid_argument("perceptron_train expects +-1 labels");
  }
  const std::size_t dim = data.features();
  PerceptronModel model;
  model.w = initial.w.empty() ? Vector(dim) : initial.w;
  model.b = options.fit_bias ? initial.b : 0.0;
  if (model.w.size() != dim) {
    throw ShapeError(fmt::format("initial weights have length {}, data has {} features", model.w.size(), dim));
  }

  Rng rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    if (options.shuffle) order = rng.permutation(data.size());
    std::size_t mistakes = 0;
    for (std::size_t i : order) {
      auto x = data.x.row(i);
      const double label = data.y[i];
      if (affine_score(model.w.values(), model.b, x) * label <= 0.0) {
        for (std::size_t j = 0; j < dim; ++j) model.w[j] += label * x[j];
        if (options.fit_bias) model.b += label;
        ++mistakes;
        ++model.update_count;
        if (options.record_trace) model.trace.push_back({epoch, i, model.w, model.b});
      }
    }
    model.epochs_run = epoch + 1;
    if (mistakes == 0) {
      model.converged = true;
      break;
    }
  }
  return model;
}

int perceptron_predict(const PerceptronModel& model, std::span<const double> x) {
  if (x.size() != model.w.size()) {
    throw ShapeError(fmt::format("perceptron has {} weights, point has {} features", model.w.size(), x.size()));
  }
  return affine_score(model.w.values(), model.b, x) > 0.0 ? 1 : -1;
}

MistakeBound certify_bound(const LabeledSet& data, const Vector& witness) {
  if (data.convention != LabelConvention::PlusMinusOne) {
    throw std::invalid_argument("certify_bound expects +-1 labels");
  }
  if (witness.size() != data.features()) {
    throw ShapeError(fmt::format("witness has length {}, data has {} features", witness.size(), data.features()));
  }
  if (std::abs(norm(witness) - 1.0) > 1e-9) {
    throw std::invalid_argument(fmt::format("witness must be a unit vector, norm is {}", norm(witness)));
  }
  double radius = 0.0;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = data.x.row(i);
    const double signed_dist = data.y[i] * affine_score(witness.values(), 0.0, x);
    if (signed_dist <= 0.0) {
      throw CertificationError(
          fmt::format("witness does not separate point {} (signed distance {})", i, signed_dist), i);
    }
    margin = std::min(margin, signed_dist);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    radius = std::max(radius, std::sqrt(sq));
  }
  return {radius, margin, (radius * radius) / (margin * margin)};
}

double sigmoid(double z) {
  // Split on sign so exp never overflows.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vector logistic_forward(const Matrix& x, const Vector& w, double b) {
  Vector z = matvec(x, w);
  for (double& v : z) v = sigmoid(v + b);
  return z;
}

double logistic_loss(const Vector& y_hat, const std::vector<int>& y) {
  if (y_hat.size() != y.size() || y.empty()) {
    throw ShapeError(fmt::format("logistic_loss: {} predictions, {} labels", y_hat.size(), y.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(y_hat[i], kProbabilityClip, 1.0 - kProbabilityClip);
    total += y[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(y.size());
}

LogisticGradient logistic_gradient(const Matrix& x, const Vector& y_hat, const std::vector<int>& y) {
  if (x.rows() != y_hat.size() || y_hat.size() != y.size()) {
    throw ShapeError(fmt::format("logistic_gradient: X {} with {} predictions and {} labels", x.shape_string(),
                                 y_hat.size(), y.size()));
  }
  const double inv_n = 1.0 / static_cast<double>(y.size());
  Vector residual(y.size());
  double gb = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    residual[i] = y_hat[i] - y[i];
    gb += residual[i];
  }
  return {scale(matvec_transposed(x, residual), inv_n), gb * inv_n};
}

LogisticModel logistic_train(const LabeledSet& data, const LogisticOptions& options) {
  if (data.convention != LabelConvention::ZeroOne) {
    throw std::invalid_argument("logistic_train expects 0/1 labels");
  }
  Rng rng(options.seed);
  LogisticModel model;
  model.w = rng.normal_vector(data.features(), 1.0 / std::sqrt(static_cast<double>(data.features())));
  model.b = 0.0;
  model.loss_history.reserve(options.epochs);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const Vector y_hat = logistic_forward(data.x, model.w, model.b);
    model.loss_history.push_back(logistic_loss(y_hat, data.y));
    const LogisticGradient g = logistic_gradient(data.x, y_hat, data.y);
    for (std::size_t j = 0; j < model.w.size(); ++j) model.w[j] -= options.learning_rate * g.w[j];
    model.b -= options.learning_rate * g.b;
  }
  return model;
}

double logistic_accuracy(const LogisticModel& model, const LabeledSet& data) {
  const Vector p = logistic_forward(data.x, model.w, model.b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int predicted = p[i] >= 0.5 ? 1 : 0;
    if (predicted == (data.y[i] == 1 ? 1 : 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace dlk
