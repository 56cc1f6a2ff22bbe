#pragma once

// First-order update rules over a flat parameter buffer: plain gradient
// descent, momentum, RMSProp and Adam.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dlk {

enum class OptimizerKind { GD, Momentum, RMSProp, Adam };

std::string to_string(OptimizerKind kind);
/// Accepts "gd", "momentum", "rmsprop", "adam" (case-sensitive).
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::GD;
  double learning_rate = 0.01;  // α for GD/momentum, η for RMSProp/Adam
  double gamma = 0.9;           // momentum coefficient
  double beta = 0.9;            // RMSProp decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Default hyperparameters for a kind: α = 0.01 for GD and momentum,
  /// η = 0.001 for RMSProp and Adam.
  static OptimizerConfig defaults(OptimizerKind kind);

  /// Throws std::invalid_argument when a hyperparameter is out of range.
  void validate() const;
};

/// x − α·g
std::vector<double> gd_step(std::span<const double> x, std::span<const double> g, double alpha);

/// Owns the per-parameter buffers of one optimizer and applies its update rule in place.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t parameter_count);

  void step(std::span<double> params, std::span<const double> grad);

  const OptimizerConfig& config() const { return config_; }
  std::size_t parameter_count() const { return count_; }
  std::size_t step_count() const { return t_; }

  std::span<const double> velocity() const { return velocity_; }
  std::span<const double> first_moment() const { return first_moment_; }
  std::span<const double> second_moment() const { return second_moment_; }

 private:
  OptimizerConfig config_;
  std::size_t count_;
  std::size_t t_ = 0;
  std::vector<double> velocity_;       // momentum
  std::vector<double> first_moment_;   // Adam m
  std::vector<double> second_moment_;  // RMSProp / Adam E
};

}  // namespace dlk
