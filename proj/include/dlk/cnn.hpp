#pragma once

// Sequential layer stack for small image classifiers, assembled from block
// descriptors (conv, relu, pooling, batchnorm, dropout, flatten, dense).
// Activations flow as [batch, channel, height, width]; after `flatten` the
// feature axis is the channel axis with 1x1 spatial extent.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dlk/conv.hpp"
#include "dlk/optim.hpp"
#include "dlk/random.hpp"
#include "dlk/tensor.hpp"

namespace dlk {

struct BlockDescriptor {
  std::string type;  // conv | relu | maxpool | avgpool | batchnorm | dropout | flatten | dense
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 3;        // conv
  std::size_t stride = 1;        // conv, pooling
  std::size_t pad = 0;           // conv
  std::size_t size = 2;          // pooling window
  double rate = 0.0;             // dropout
  std::size_t units = 0;         // dense
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string name() const = 0;
  virtual Tensor4 forward(const Tensor4& x, bool training, Rng& rng) = 0;
  /// Consumes the gradient w.r.t. the last forward output; fills parameter
  /// gradients and returns the gradient w.r.t. the input.
  virtual Tensor4 backward(const Tensor4& grad_out) = 0;
  virtual std::vector<std::span<double>> parameters() { return {}; }
  virtual std::vector<std::span<const double>> gradients() const { return {}; }
};

class Sequential {
 public:
  Sequential() = default;
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Tensor4 forward(const Tensor4& x, bool training, Rng& rng);
  Tensor4 backward(const Tensor4& grad_out);

  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;
  void assign_flat(std::span<const double> flat);
  std::vector<double> flat_gradients() const;
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> gradient_blocks() const;

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Validates descriptor shapes against the input dims and initializes weights
/// N(0,1)/√fan-in from the seed. Throws std::invalid_argument naming the bad block.
Sequential build_network(const std::vector<BlockDescriptor>& blocks, const Tensor4::Dims& input_dims,
                         std::uint64_t seed);

/// [batch, k, 1, 1] logits to an N×k matrix.
Matrix logits_matrix(const Tensor4& logits);

struct CnnTrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  bool shuffle = true;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer = OptimizerConfig::defaults(OptimizerKind::Adam);
};

struct CnnEpoch {
  double loss;
  double accuracy;
};

/// Softmax cross-entropy training. `images` is [N, C, H, W]; labels are class indices.
std::vector<CnnEpoch> train_cnn(Sequential& net, const Tensor4& images, const std::vector<int>& labels,
                                const CnnTrainOptions& options);

/// Class predictions in evaluation mode.
std::vector<int> cnn_predict(Sequential& net, const Tensor4& images);

/// Loss value and input gradient of mean softmax cross-entropy on [N,k,1,1] logits.
double softmax_cross_entropy(const Tensor4& logits, const std::vector<int>& labels, Tensor4* grad_logits);

}  // namespace dlk
