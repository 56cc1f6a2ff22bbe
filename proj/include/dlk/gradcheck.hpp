#pragma once

// Central finite differences and the comparison rule every analytic gradient
// in the library is tested against.

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlk {

inline constexpr double kDefaultStep = 1e-5;
inline constexpr double kDefaultRelTol = 1e-5;
inline constexpr double kDefaultAbsTol = 1e-8;

/// Thrown when the probed function is not finite at some probe point.
class ProbeError : public std::runtime_error {
 public:
  ProbeError(const std::string& what, std::size_t coordinate) : std::runtime_error(what), coordinate_(coordinate) {}
  std::size_t coordinate() const { return coordinate_; }

 private:
  std::size_t coordinate_;
};

/// Thrown when a probe point sits too close to a kink of ReLU or max.
class KinkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an analytic gradient entry is too small for a difference quotient
/// at step h to resolve against the loss magnitude (see resolution_floor).
class ResolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smallest |g| a central difference at step h can measure to relative accuracy
/// tol_rel when the loss is near f: the quotient carries an absolute roundoff of
/// about ε_mach·max(|f|, 1)/h, doubled here for rounding inside the loss itself.
double resolution_floor(double f, double h, double tol_rel);

using ScalarFn = std::function<double(std::span<const double>)>;

/// (f(x + h eᵢ) − f(x − h eᵢ)) / 2h per coordinate.
std::vector<double> central_diff(const ScalarFn& f, std::span<const double> x, double h = kDefaultStep);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_coordinate = 0;
  double h = kDefaultStep;
  double tolerance = kDefaultRelTol;
  std::size_t coordinates = 0;
  bool pass = true;
};

/// Per-coordinate error |a − e| / max(|a|, |e|, tol_abs); coordinates where
/// both |a| and |e| fall below tol_abs count as zero error.
GradCheckReport compare(std::span<const double> analytic, std::span<const double> estimate,
                        double tol_rel = kDefaultRelTol, double tol_abs = kDefaultAbsTol);

/// Named view into parameters the loss reads through captured references, with
/// the matching analytic gradient.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

struct GradCheckOptions {
  double h = kDefaultStep;
  double tol_rel = kDefaultRelTol;
  double tol_abs = kDefaultAbsTol;
  /// Returns the smallest distance of any kink argument (a ReLU pre-activation,
  /// a max-pool gap) from its kink at the current parameters. Checked before
  /// probing; a value below 10·h raises KinkError.
  std::function<double()> kink_distance;
  /// When set, an analytic entry in [tol_abs, resolution_floor) raises
  /// ResolutionError before probing.
  bool resolution_guard = false;
  /// Absolute rounding error of one loss evaluation, for losses worse
  /// conditioned than ε·max(|f|, 1). The guard's floor becomes 2·noise/(h·tol_rel).
  std::function<double()> loss_roundoff;
};

/// Perturbs each block entry in place, evaluates `loss`, restores, and compares
/// against the block's analytic gradient. Reports the worst coordinate across all blocks.
GradCheckReport check_gradient(const std::function<double()>& loss, const std::vector<ParamBlock>& blocks,
                               const GradCheckOptions& options = {});

/// Folds several reports into one (worst error wins, pass only if all pass).
GradCheckReport merge(const std::vector<GradCheckReport>& reports);

}  // namespace dlk
