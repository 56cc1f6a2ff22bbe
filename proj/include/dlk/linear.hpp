#pragma once

// Linear classifiers: the perceptron (with its mistake-bound certificate) and
// logistic regression trained by full-batch gradient descent.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dlk/tensor.hpp"

namespace dlk {

enum class LabelConvention { PlusMinusOne, ZeroOne };

/// Feature rows plus integer labels in a declared convention.
struct LabeledSet {
  Matrix x;
  std::vector<int> y;
  LabelConvention convention = LabelConvention::ZeroOne;

  LabeledSet() = default;
  /// Throws std::invalid_argument if sizes disagree or a label falls outside the convention.
  LabeledSet(Matrix features, std::vector<int> labels, LabelConvention conv);

  std::size_t size() const { return y.size(); }
  std::size_t features() const { return x.cols(); }
};

/// Maps 0/1 labels to ∓1 and vice versa; identity if already in the target convention.
LabeledSet with_convention(const LabeledSet& data, LabelConvention target);

/// Appends a constant-1 feature: x ↦ (x, 1).
LabeledSet lift_affine(const LabeledSet& data);

struct PerceptronUpdate {
  std::size_t epoch;
  std::size_t index;
  Vector w;
  double b;
};

struct PerceptronModel {
  Vector w;
  double b = 0.0;
  std::size_t update_count = 0;
  std::size_t epochs_run = 0;
  bool converged = false;
  /// (w, b) after every update, in order.
  std::vector<PerceptronUpdate> trace;
};

struct PerceptronOptions {
  std::size_t max_epochs = 1000;
  /// false trains a hyperplane through the origin (b stays 0).
  bool fit_bias = true;
  bool shuffle = false;
  std::uint64_t seed = 0;
  bool record_trace = false;
};

/// Rosenblatt perceptron. A point counts as misclassified when
/// (⟨w,x⟩ + b)·y ≤ 0, so training from w = 0 always makes progress. Stops after
/// the first clean pass or after max_epochs.
PerceptronModel perceptron_train(const LabeledSet& data, const PerceptronOptions& options = {},
                                 const PerceptronModel& initial = {});

int perceptron_predict(const PerceptronModel& model, std::span<const double> x);

class CertificationError : public std::runtime_error {
 public:
  CertificationError(const std::string& what, std::size_t index) : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct MistakeBound {
  double radius;  // R = max ‖x‖
  double margin;  // d = min y·⟨u,x⟩
  double bound;   // R²/d²
};

/// Certifies that the unit vector `witness` separates `data` (±1 labels) through
/// the origin and returns the perceptron mistake bound R²/d². Pass lifted data
/// to certify an affine separator.
MistakeBound certify_bound(const LabeledSet& data, const Vector& witness);

// Logistic regression.

double sigmoid(double z);

/// σ(XW + b), one probability per row.
Vector logistic_forward(const Matrix& x, const Vector& w, double b);

/// Clip applied to probabilities before taking logarithms.
inline constexpr double kProbabilityClip = 1e-12;

/// Mean binary cross-entropy; y holds 0/1 targets.
double logistic_loss(const Vector& y_hat, const std::vector<int>& y);

struct LogisticGradient {
  Vector w;
  double b;
};

/// ((1/N) Xᵀ(Ŷ − Y), (1/N) Σ(Ŷᵢ − Yᵢ))
LogisticGradient logistic_gradient(const Matrix& x, const Vector& y_hat, const std::vector<int>& y);

struct LogisticModel {
  Vector w;
  double b = 0.0;
  std::vector<double> loss_history;
};

struct LogisticOptions {
  std::size_t epochs = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

/// Full-batch gradient descent from W ~ N(0,1)/√D, b = 0. The loss recorded for
/// an epoch is the loss of the parameters that epoch started from.
LogisticModel logistic_train(const LabeledSet& data, const LogisticOptions& options);

/// Fraction of rows whose thresholded probability (≥ 0.5 ↦ 1) matches the 0/1 label.
double logistic_accuracy(const LogisticModel& model, const LabeledSet& data);

}  // namespace dlk
