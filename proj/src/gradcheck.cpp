#include "dlk/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "dlk/tensor.hpp"

namespace dlk {

std::vector<double> central_diff(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("central_diff: step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw ProbeError(fmt::format("non-finite function value probing coordinate {}", i), i);
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace {

double coordinate_error(double a, double e, double tol_abs) {
  if (std::abs(a) < tol_abs && std::abs(e) < tol_abs) return 0.0;
  return std::abs(a - e) / std::max({std::abs(a), std::abs(e), tol_abs});
}

}  // namespace

GradCheckReport compare(std::span<const double> analytic, std::span<const double> estimate, double tol_rel,
                        double tol_abs) {
  if (analytic.size() != estimate.size()) {
    throw ShapeError(fmt::format("compare: {} analytic entries vs {} estimates", analytic.size(), estimate.size()));
  }
  GradCheckReport report;
  report.tolerance = tol_rel;
  report.coordinates = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = coordinate_error(analytic[i], estimate[i], tol_abs);
    if (err > report.max_rel_error || std::isnan(err)) {
      report.max_rel_error = err;
      report.worst_coordinate = i;
    }
  }
  report.pass = report.max_rel_error < tol_rel;
  return report;
}

double resolution_floor(double f, double h, double tol_rel) {
  return 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f), 1.0) / (h * tol_rel);
}

GradCheckReport check_gradient(const std::function<double()>& loss, const std::vector<ParamBlock>& blocks,
                               const GradCheckOptions& options) {
  if (options.kink_distance) {
    const double gap = options.kink_distance();
    if (gap < 10.0 * options.h) {
      throw KinkError(fmt::format("probe point within {} of a kink (guard is {})", gap, 10.0 * options.h));
    }
  }
  if (options.resolution_guard) {
    const double floor = options.loss_roundoff ? 2.0 * options.loss_roundoff() / (options.h * options.tol_rel)
                                               : resolution_floor(loss(), options.h, options.tol_rel);
    for (const ParamBlock& block : blocks) {
      for (std::size_t i = 0; i < block.analytic.size(); ++i) {
        const double a = std::abs(block.analytic[i]);
        if (a >= options.tol_abs && a < floor) {
          throw ResolutionError(fmt::format("{}[{}] = {} is below the difference resolution {}", block.name, i,
                                            block.analytic[i], floor));
        }
      }
    }
  }
  GradCheckReport report;
  report.h = options.h;
  report.tolerance = options.tol_rel;
  for (const ParamBlock& block : blocks) {
    if (block.values.size() != block.analytic.size()) {
      throw ShapeError(fmt::format("block '{}': {} values vs {} gradient entries", block.name, block.values.size(),
                                   block.analytic.size()));
    }
    std::vector<double> estimate(block.values.size());
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      block.values[i] = saved + options.h;
      const double up = loss();
      block.values[i] = saved - options.h;
      const double down = loss();
      block.values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw ProbeError(fmt::format("non-finite loss probing {}[{}]", block.name, i), i);
      }
      estimate[i] = (up - down) / (2.0 * options.h);
    }
    const GradCheckReport r = compare(block.analytic, estimate, options.tol_rel, options.tol_abs);
    report.coordinates += r.coordinates;
    if (r.max_rel_error > report.max_rel_error || report.worst_block.empty()) {
      report.max_rel_error = r.max_rel_error;
      report.worst_block = block.name;
      report.worst_coordinate = r.worst_coordinate;
    }
  }
  report.pass = report.max_rel_error < options.tol_rel;
  return report;
}

GradCheckReport merge(const std::vector<GradCheckReport>& reports) {
  GradCheckReport out;
  for (const GradCheckReport& r : reports) {
    out.coordinates += r.coordinates;
    out.h = r.h;
    out.tolerance = r.tolerance;
    if (r.max_rel_error >= out.max_rel_error) {
      out.max_rel_error = r.max_rel_error;
      out.worst_block = r.worst_block;
      out.worst_coordinate = r.worst_coordinate;
    }
    out.pass = out.pass && r.pass;
  }
  return out;
}

}  // namespace dlk
