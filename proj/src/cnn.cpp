#include "dlk/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "dlk/mlp.hpp"

namespace dlk {

namespace {

class ConvLayer final : public Layer {
 public:
  ConvLayer(ConvSpec spec, Rng& rng) : spec_(spec) {
    const double fan_in = static_cast<double>(spec.c_in * spec.kernel * spec.kernel);
    kernel_ = rng.normal_tensor({spec.c_out, spec.c_in, spec.kernel, spec.kernel}, 1.0 / std::sqrt(fan_in));
    bias_ = Vector(spec.c_out);
    grad_kernel_ = Tensor4(kernel_.dims());
    grad_bias_ = Vector(spec.c_out);
  }
  std::string name() const override { return "conv"; }
  Tensor4 forward(const Tensor4& x, bool, Rng&) override {
    input_ = x;
    return conv_forward(x, kernel_, spec_, bias_);
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    ConvGradients g = conv_backward(grad_out, input_, kernel_, spec_);
    grad_kernel_ = std::move(g.kernel);
    grad_bias_ = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<std::span<double>> parameters() override { return {kernel_.values(), bias_.values()}; }
  std::vector<std::span<const double>> gradients() const override { return {grad_kernel_.values(), grad_bias_.values()}; }

 private:
  ConvSpec spec_;
  Tensor4 kernel_;
  Vector bias_;
  Tensor4 grad_kernel_;
  Vector grad_bias_;
  Tensor4 input_;
};

class ReluLayer final : public Layer {
 public:
  std::string name() const override { return "relu"; }
  Tensor4 forward(const Tensor4& x, bool, Rng&) override {
    input_ = x;
    Tensor4 out = x;
    for (double& v : out.values()) v = relu(v);
    return out;
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    Tensor4 g = grad_out;
    auto in = input_.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= relu_prime(in[i]);
    return g;
  }

 private:
  Tensor4 input_;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(std::size_t p, std::size_t s) : p_(p), s_(s) {}
  std::string name() const override { return "maxpool"; }
  Tensor4 forward(const Tensor4& x, bool, Rng&) override {
    input_dims_ = x.dims();
    MaxPoolResult r = maxpool_forward(x, p_, s_);
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  Tensor4 backward(const Tensor4& grad_out) override { return maxpool_backward(grad_out, argmax_, input_dims_); }

 private:
  std::size_t p_, s_;
  Tensor4::Dims input_dims_{};
  std::vector<std::size_t> argmax_;
};

class AvgPoolLayer final : public Layer {
 public:
  AvgPoolLayer(std::size_t p, std::size_t s) : p_(p), s_(s) {}
  std::string name() const override { return "avgpool"; }
  Tensor4 forward(const Tensor4& x, bool, Rng&) override {
    input_dims_ = x.dims();
    return avgpool_forward(x, p_, s_);
  }
  Tensor4 backward(const Tensor4& grad_out) override { return avgpool_backward(grad_out, input_dims_, p_, s_); }

 private:
  std::size_t p_, s_;
  Tensor4::Dims input_dims_{};
};

class BatchNormLayer final : public Layer {
 public:
  explicit BatchNormLayer(std::size_t channels)
      : state_(BatchNormState::for_channels(channels)), grad_gamma_(channels), grad_beta_(channels) {}
  std::string name() const override { return "batchnorm"; }
  Tensor4 forward(const Tensor4& x, bool training, Rng&) override {
    state_.mode = training ? NormMode::Train : NormMode::Eval;
    BatchNormResult r = batchnorm_forward(x, state_);
    cache_ = std::move(r.cache);
    return std::move(r.output);
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    BatchNormGradients g = batchnorm_backward(grad_out, cache_, state_);
    grad_gamma_ = std::move(g.gamma);
    grad_beta_ = std::move(g.beta);
    return std::move(g.input);
  }
  std::vector<std::span<double>> parameters() override { return {state_.gamma.values(), state_.beta.values()}; }
  std::vector<std::span<const double>> gradients() const override {
    return {grad_gamma_.values(), grad_beta_.values()};
  }

 private:
  BatchNormState state_;
  BatchNormCache cache_;
  Vector grad_gamma_, grad_beta_;
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {}
  std::string name() const override { return "dropout"; }
  Tensor4 forward(const Tensor4& x, bool training, Rng& rng) override {
    if (!training || rate_ == 0.0) {
      mask_.reset();
      return x;
    }
    const Matrix m = dropout_mask(1, x.size(), rate_, rng);
    mask_ = Tensor4(x.dims(), m.raw());
    Tensor4 out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= mask_->raw()[i];
    return out;
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    if (!mask_) return grad_out;
    Tensor4 g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] *= mask_->raw()[i];
    return g;
  }

 private:
  double rate_;
  std::optional<Tensor4> mask_;
};

class FlattenLayer final : public Layer {
 public:
  std::string name() const override { return "flatten"; }
  Tensor4 forward(const Tensor4& x, bool, Rng&) override {
    input_dims_ = x.dims();
    return Tensor4({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3), 1, 1}, x.raw());
  }
  Tensor4 backward(const Tensor4& grad_out) override { return Tensor4(input_dims_, grad_out.raw()); }

 private:
  Tensor4::Dims input_dims_{};
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::size_t in, std::size_t out, Rng& rng)
      : weights_(rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)))),
        bias_(out),
        grad_weights_(in, out),
        grad_bias_(out) {}
  std::string name() const override { return "dense"; }
  Tensor4 forward(const Tensor4& x, bool, Rng&) override {
    if (x.dim(2) != 1 || x.dim(3) != 1 || x.dim(1) != weights_.rows()) {
      throw ShapeError(fmt::format("dense layer expects (Nx{}x1x1), got {}", weights_.rows(), x.shape_string()));
    }
    input_ = Matrix(x.dim(0), x.dim(1), x.raw());
    const Matrix out = add_row_broadcast(matmul(input_, weights_), bias_);
    return Tensor4({out.rows(), out.cols(), 1, 1}, out.raw());
  }
  Tensor4 backward(const Tensor4& grad_out) override {
    const Matrix g(grad_out.dim(0), grad_out.dim(1), grad_out.raw());
    grad_weights_ = matmul(transpose(input_), g);
    grad_bias_ = column_sum(g);
    const Matrix gi = matmul(g, transpose(weights_));
    return Tensor4({gi.rows(), gi.cols(), 1, 1}, gi.raw());
  }
  std::vector<std::span<double>> parameters() override { return {weights_.values(), bias_.values()}; }
  std::vector<std::span<const double>> gradients() const override {
    return {grad_weights_.values(), grad_bias_.values()};
  }

 private:
  Matrix weights_;
  Vector bias_;
  Matrix grad_weights_;
  Vector grad_bias_;
  Matrix input_;
};

}  // namespace

Tensor4 Sequential::forward(const Tensor4& x, bool training, Rng& rng) {
  Tensor4 a = x;
  for (auto& layer : layers_) a = layer->forward(a, training, rng);
  return a;
}

Tensor4 Sequential::backward(const Tensor4& grad_out) {
  Tensor4 g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::size_t Sequential::parameter_count() const {
  std::size_t n = 0;
  for (const auto& block : gradient_blocks()) n += block.size();
  return n;
}

std::vector<double> Sequential::flat_parameters() const {
  std::vector<double> flat;
  for (const auto& layer : layers_)
    for (auto block : layer->parameters()) flat.insert(flat.end(), block.begin(), block.end());
  return flat;
}

void Sequential::assign_flat(std::span<const double> flat) {
  std::size_t pos = 0;
  for (auto& layer : layers_)
    for (auto block : layer->parameters()) {
      if (pos + block.size() > flat.size()) throw ShapeError("assign_flat: too few values");
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), block.size(), block.begin());
      pos += block.size();
    }
  if (pos != flat.size()) throw ShapeError("assign_flat: too many values");
}

std::vector<double> Sequential::flat_gradients() const {
  std::vector<double> flat;
  for (auto block : gradient_blocks()) flat.insert(flat.end(), block.begin(), block.end());
  return flat;
}

std::vector<std::span<double>> Sequential::parameter_blocks() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_)
    for (auto block : layer->parameters()) out.push_back(block);
  return out;
}

std::vector<std::span<const double>> Sequential::gradient_blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers_)
    for (auto block : layer->gradients()) out.push_back(block);
  return out;
}

Sequential build_network(const std::vector<BlockDescriptor>& blocks, const Tensor4::Dims& input_dims,
                         std::uint64_t seed) {
  Rng rng(seed);
  Sequential net;
  Tensor4::Dims dims = input_dims;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const BlockDescriptor& b = blocks[k];
    auto fail = [&](const std::string& why) {
      return std::invalid_argument(fmt::format("block {} ({}): {}", k, b.type, why));
    };
    const bool flat = dims[2] == 1 && dims[3] == 1;
    try {
      if (b.type == "conv") {
        if (b.out_channels == 0) throw fail("out_channels must be >= 1");
        ConvSpec spec{dims[1], b.out_channels, b.kernel, b.stride, b.pad};
        spec.validate();
        dims = {dims[0], b.out_channels, spec.output_side(dims[2]), spec.output_side(dims[3])};
        net.add(std::make_unique<ConvLayer>(spec, rng));
      } else if (b.type == "relu") {
        net.add(std::make_unique<ReluLayer>());
      } else if (b.type == "maxpool" || b.type == "avgpool") {
        if (b.size == 0 || b.stride == 0) throw fail("size and stride must be >= 1");
        if (b.size > dims[2] || b.size > dims[3]) throw fail("window exceeds input");
        dims = {dims[0], dims[1], (dims[2] - b.size) / b.stride + 1, (dims[3] - b.size) / b.stride + 1};
        if (b.type == "maxpool") {
          net.add(std::make_unique<MaxPoolLayer>(b.size, b.stride));
        } else {
          net.add(std::make_unique<AvgPoolLayer>(b.size, b.stride));
        }
      } else if (b.type == "batchnorm") {
        net.add(std::make_unique<BatchNormLayer>(dims[1]));
      } else if (b.type == "dropout") {
        if (!(b.rate >= 0.0 && b.rate < 1.0)) throw fail("rate must lie in [0,1)");
        net.add(std::make_unique<DropoutLayer>(b.rate));
      } else if (b.type == "flatten") {
        dims = {dims[0], dims[1] * dims[2] * dims[3], 1, 1};
        net.add(std::make_unique<FlattenLayer>());
      } else if (b.type == "dense") {
        if (!flat) throw fail("dense needs a flattened input");
        if (b.units == 0) throw fail("units must be >= 1");
        net.add(std::make_unique<DenseLayer>(dims[1], b.units, rng));
        dims = {dims[0], b.units, 1, 1};
      } else {
        throw fail("unknown block type");
      }
    } catch (const ShapeError& e) {
      throw fail(e.what());
    }
  }
  if (dims[2] != 1 || dims[3] != 1) {
    throw std::invalid_argument("network must end in a flattened (dense) block producing class logits");
  }
  return net;
}

Matrix logits_matrix(const Tensor4& logits) {
  if (logits.dim(2) != 1 || logits.dim(3) != 1) {
    throw ShapeError(fmt::format("expected (Nxkx1x1) logits, got {}", logits.shape_string()));
  }
  return Matrix(logits.dim(0), logits.dim(1), logits.raw());
}

double softmax_cross_entropy(const Tensor4& logits, const std::vector<int>& labels, Tensor4* grad_logits) {
  const Matrix z = logits_matrix(logits);
  const Matrix y = one_hot(labels, z.cols());
  if (y.rows() != z.rows()) throw ShapeError("softmax_cross_entropy: label count mismatch");
  const Matrix p = softmax_rows(z);
  if (grad_logits != nullptr) {
    const Matrix g = scale(subtract(p, y), 1.0 / static_cast<double>(z.rows()));
    *grad_logits = Tensor4(logits.dims(), g.raw());
  }
  return cross_entropy(p, y);
}

namespace {

Tensor4 gather_images(const Tensor4& images, std::span<const std::size_t> idx) {
  const auto& d = images.dims();
  const std::size_t per = d[1] * d[2] * d[3];
  Tensor4 out({idx.size(), d[1], d[2], d[3]});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images.raw().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.values().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

}  // namespace

std::vector<int> cnn_predict(Sequential& net, const Tensor4& images) {
  Rng unused(0);
  return predict_classes(logits_matrix(net.forward(images, false, unused)));
}

std::vector<CnnEpoch> train_cnn(Sequential& net, const Tensor4& images, const std::vector<int>& labels,
                                const CnnTrainOptions& options) {
  const std::size_t n = images.dim(0);
  if (labels.size() != n) throw ShapeError(fmt::format("train_cnn: {} images, {} labels", n, labels.size()));
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  const Rng root(options.seed);
  Rng order_rng = root.split(1);
  Rng dropout_rng = root.split(2);
  Optimizer optimizer(options.optimizer, net.parameter_count());
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<CnnEpoch> history;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.shuffle) order = order_rng.permutation(n);
    double weighted = 0.0;
    for (std::size_t start = 0; start < n;) {
      std::size_t count = std::min(options.batch_size, n - start);
      // A lone trailing example joins the previous batch; batchnorm cannot train on one.
      if (n - start - count == 1) ++count;
      std::span<const std::size_t> idx(order.data() + start, count);
      std::vector<int> batch_labels(count);
      for (std::size_t i = 0; i < count; ++i) batch_labels[i] = labels[idx[i]];
      const Tensor4 logits = net.forward(gather_images(images, idx), true, dropout_rng);
      Tensor4 grad;
      weighted += softmax_cross_entropy(logits, batch_labels, &grad) * static_cast<double>(count);
      net.backward(grad);
      std::vector<double> params = net.flat_parameters();
      optimizer.step(params, net.flat_gradients());
      net.assign_flat(params);
      start += count;
    }
    history.push_back({weighted / static_cast<double>(n), accuracy(cnn_predict(net, images), labels)});
  }
  return history;
}

}  // namespace dlk
