#include "dlk/optim.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "dlk/tensor.hpp"

namespace dlk {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::GD: return "gd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::RMSProp: return "rmsprop";
    case OptimizerKind::Adam: return "adam";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "gd") return OptimizerKind::GD;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "rmsprop") return OptimizerKind::RMSProp;
  if (name == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument(fmt::format("unknown optimizer kind '{}'", name));
}

OptimizerConfig OptimizerConfig::defaults(OptimizerKind kind) {
  OptimizerConfig c;
  c.kind = kind;
  c.learning_rate = (kind == OptimizerKind::RMSProp || kind == OptimizerKind::Adam) ? 0.001 : 0.01;
  return c;
}

void OptimizerConfig::validate() const {
  // A zero rate is allowed: it freezes the parameters, which tests rely on.
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("optimizer: learning_rate must be >= 0");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument(fmt::format("optimizer: {} must lie in [0,1)", name));
  };
  unit(gamma, "gamma");
  unit(beta, "beta");
  unit(beta1, "beta1");
  unit(beta2, "beta2");
  if (!(epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be > 0");
}

std::vector<double> gd_step(std::span<const double> x, std::span<const double> g, double alpha) {
  if (x.size() != g.size()) {
    throw ShapeError(fmt::format("gd_step: {} parameters but {} gradient entries", x.size(), g.size()));
  }
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= alpha * g[i];
  return out;
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t parameter_count)
    : config_(config), count_(parameter_count) {
  config_.validate();
  switch (config_.kind) {
    case OptimizerKind::GD: break;
    case OptimizerKind::Momentum: velocity_.assign(count_, 0.0); break;
    case OptimizerKind::RMSProp: second_moment_.assign(count_, 0.0); break;
    case OptimizerKind::Adam:
      first_moment_.assign(count_, 0.0);
      second_moment_.assign(count_, 0.0);
      break;
  }
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != count_ || grad.size() != count_) {
    throw ShapeError(fmt::format("optimizer tracks {} parameters, got {} parameters and {} gradient entries", count_,
                                 params.size(), grad.size()));
  }
  ++t_;
  const double lr = config_.learning_rate;
  switch (config_.kind) {
    case OptimizerKind::GD:
      for (std::size_t i = 0; i < count_; ++i) params[i] -= lr * grad[i];
      break;
    case OptimizerKind::Momentum:
      for (std::size_t i = 0; i < count_; ++i) {
        velocity_[i] = config_.gamma * velocity_[i] + lr * grad[i];
        params[i] -= velocity_[i];
      }
      break;
    case OptimizerKind::RMSProp:
      for (std::size_t i = 0; i < count_; ++i) {
        second_moment_[i] = config_.beta * second_moment_[i] + (1.0 - config_.beta) * grad[i] * grad[i];
        params[i] -= lr * grad[i] / std::sqrt(second_moment_[i] + config_.epsilon);
      }
      break;
    case OptimizerKind::Adam: {
      // t_ is already 1 on the first call, so the corrections never divide by zero.
      const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < count_; ++i) {
        first_moment_[i] = config_.beta1 * first_moment_[i] + (1.0 - config_.beta1) * grad[i];
        second_moment_[i] = config_.beta2 * second_moment_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
        const double m_hat = first_moment_[i] / c1;
        const double e_hat = second_moment_[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(e_hat) + config_.epsilon);
      }
      break;
    }
  }
}

}  // namespace dlk
